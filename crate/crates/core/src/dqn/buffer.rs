use rand::Rng;

use super::sum_tree::SumTree;
use super::DqnError;

/// Indices and importance-sampling weights of one sampled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    /// `(N·P(i))^(−β)`, divided by the batch maximum.
    pub weights: Vec<f64>,
    /// Sampling probabilities `P(i)`.
    pub probabilities: Vec<f64>,
}

/// Proportional prioritized replay: ring storage plus a sum tree over
/// `p_i^α`, where `p_i` is the raw priority.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer<I> {
    items: Vec<I>,
    priorities: Vec<f64>,
    next: usize,
    alpha: f64,
    max_priority: f64,
    tree: SumTree,
}

impl<I> PrioritizedBuffer<I> {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(4096)),
            priorities: vec![0.0; capacity],
            next: 0,
            alpha,
            max_priority: 1.0,
            tree: SumTree::new(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn get(&self, i: usize) -> &I {
        &self.items[i]
    }

    /// Raw priority `p_i`.
    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    /// Sampling mass `p_i^α` as stored in the tree.
    pub fn mass(&self, i: usize) -> f64 {
        self.tree.get(i)
    }

    pub fn total_mass(&self) -> f64 {
        self.tree.total()
    }

    pub fn max_priority(&self) -> f64 {
        self.max_priority
    }

    /// Inserts at the current maximum priority, evicting the oldest item when full.
    pub fn push(&mut self, item: I) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity() {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.set_priority(slot, self.max_priority);
        self.next = (self.next + 1) % self.capacity();
        slot
    }

    fn set_priority(&mut self, i: usize, p: f64) {
        self.priorities[i] = p;
        self.tree.set(i, p.powf(self.alpha));
    }

    /// Sets raw priorities (e.g. `|δ| + ε_p`) and tracks their maximum.
    pub fn update_priorities(&mut self, indices: &[usize], priorities: &[f64]) {
        for (&i, &p) in indices.iter().zip(priorities) {
            assert!(i < self.items.len(), "index {i} not populated");
            assert!(p > 0.0 && p.is_finite(), "priority must be positive, got {p}");
            self.set_priority(i, p);
            self.max_priority = self.max_priority.max(p);
        }
    }

    /// Stratified proportional sampling: the total mass is cut into `batch`
    /// equal segments and one point is drawn uniformly inside each.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<SampledBatch, DqnError> {
        if batch == 0 || self.len() < batch {
            return Err(DqnError::Underfull { have: self.len(), need: batch });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut probabilities = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for j in 0..batch {
            let u = segment * (j as f64 + rng.gen::<f64>());
            let i = self.tree.find(u.min(total));
            let p = self.tree.get(i) / total;
            indices.push(i);
            probabilities.push(p);
            weights.push((n * p).powf(-beta));
        }
        let max_w = weights.iter().copied().fold(f64::MIN, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        Ok(SampledBatch { indices, weights, probabilities })
    }
}
