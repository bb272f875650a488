/// Binary sum tree over a fixed number of non-negative leaf masses.
///
/// Internal nodes are always recomputed from their children (never updated
/// by deltas), so the root stays equal to the leaf sum up to rounding.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self { capacity, leaves, nodes: vec![0.0; 2 * leaves] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, mass: f64) {
        assert!(i < self.capacity, "leaf {i} out of range");
        assert!(mass >= 0.0 && mass.is_finite(), "invalid mass {mass}");
        let mut idx = self.leaves + i;
        self.nodes[idx] = mass;
        while idx > 1 {
            idx /= 2;
            self.nodes[idx] = self.nodes[2 * idx] + self.nodes[2 * idx + 1];
        }
    }

    /// Leaf whose cumulative-mass interval contains `mass`. Never returns a
    /// zero-mass leaf while the total is positive.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut idx = 1;
        while idx < self.leaves {
            let left = 2 * idx;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                idx = left;
            } else {
                mass -= self.nodes[left];
                idx = left + 1;
            }
        }
        idx - self.leaves
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn find_walks_cumulative_intervals() {
        let mut t = SumTree::new(5);
        for (i, m) in [1.0, 0.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            t.set(i, m);
        }
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.0), 4);
        // rounding past the end stays on a live leaf
        assert_eq!(t.find(10.5), 4);
    }

    proptest! {
        #[test]
        fn root_matches_flat_sum(ops in prop::collection::vec((0usize..37, 0.0f64..100.0), 1..400)) {
            let mut tree = SumTree::new(37);
            let mut flat = vec![0.0; 37];
            for (i, m) in ops {
                tree.set(i, m);
                flat[i] = m;
            }
            let sum: f64 = flat.iter().sum();
            prop_assert!((tree.total() - sum).abs() <= 1e-9 * sum.max(1.0));
        }
    }
}
