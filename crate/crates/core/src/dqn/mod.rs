//! Independent Dueling Double DQN learner with proportional prioritized replay.

mod buffer;
mod sum_tree;

pub use buffer::{PrioritizedBuffer, SampledBatch};
pub use sum_tree::SumTree;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Observation, N_ACTIONS};
use crate::nn::{Adam, AdamConfig, HeadGrad, HeadKind, Network, NetworkSpec, NnError, Scalar, TrunkSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DqnError {
    #[error("replay buffer holds {have} transitions, need {need}")]
    Underfull { have: usize, need: usize },
    #[error("invalid DQN config: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    /// Hard target copy every this many learn steps.
    pub target_sync_period: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the training episodes over which ε decays.
    pub eps_decay_fraction: f64,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_epsilon: f64,
    pub huber_delta: f64,
    /// Environment steps between learn steps once the buffer holds a batch.
    pub learn_every: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            batch: 32,
            buffer_capacity: 50_000,
            target_sync_period: 1_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.8,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_epsilon: 1e-3,
            huber_delta: 1.0,
            learn_every: 1,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m| Err(DqnError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("0 ≤ gamma ≤ 1");
        }
        if self.per_alpha < 0.0 {
            return bad("per_alpha ≥ 0");
        }
        if !(self.per_beta_start > 0.0 && self.per_beta_start <= 1.0) {
            return bad("0 < per_beta_start ≤ 1");
        }
        if self.eps_end > self.eps_start || self.eps_end < 0.0 || self.eps_start > 1.0 {
            return bad("0 ≤ eps_end ≤ eps_start ≤ 1");
        }
        if !(0.0..=1.0).contains(&self.eps_decay_fraction) {
            return bad("0 ≤ eps_decay_fraction ≤ 1");
        }
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return bad("1 ≤ batch ≤ buffer_capacity");
        }
        if self.per_epsilon <= 0.0 || self.huber_delta <= 0.0 || self.lr < 0.0 {
            return bad("per_epsilon > 0, huber_delta > 0, lr ≥ 0");
        }
        if self.target_sync_period == 0 || self.learn_every == 0 {
            return bad("target_sync_period ≥ 1, learn_every ≥ 1");
        }
        Ok(())
    }
}

/// Shared linear ε schedule: `eps_start → eps_end` over
/// `eps_decay_fraction · total_episodes` episodes, constant afterwards.
/// The same value applies to every agent.
pub fn epsilon_at(episode: usize, total_episodes: usize, cfg: &DqnConfig) -> f64 {
    let horizon = cfg.eps_decay_fraction * total_episodes as f64;
    let e = episode as f64;
    if horizon <= 0.0 || e >= horizon {
        cfg.eps_end
    } else {
        cfg.eps_start + (cfg.eps_end - cfg.eps_start) * (e / horizon)
    }
}

/// Importance-sampling exponent, annealed linearly from `per_beta_start` to 1
/// over training.
pub fn beta_at(episode: usize, total_episodes: usize, cfg: &DqnConfig) -> f64 {
    if total_episodes == 0 {
        return 1.0;
    }
    let frac = (episode as f64 / total_episodes as f64).min(1.0);
    cfg.per_beta_start + (1.0 - cfg.per_beta_start) * frac
}

/// `Q(a) = V + A(a) − mean(A)`
pub fn dueling_aggregate<T: Scalar>(value: T, advantages: &[T; N_ACTIONS]) -> [T; N_ACTIONS] {
    let mean = advantages.iter().copied().sum::<T>() / T::lit(N_ACTIONS as f64);
    advantages.map(|a| value + a - mean)
}

/// First index of the maximum.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn huber(delta: f64, kappa: f64) -> f64 {
    let a = delta.abs();
    if a <= kappa {
        0.5 * delta * delta
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

fn huber_grad(delta: f64, kappa: f64) -> f64 {
    delta.clamp(-kappa, kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

pub fn q_values<T: Scalar>(net: &Network<T>, obs: &Observation) -> Result<[T; N_ACTIONS], NnError> {
    let out = net.evaluate(obs)?;
    Ok(dueling_aggregate(out.scalar, &out.vector))
}

/// Double-estimator targets: the online network picks `a*`, the target
/// network evaluates it. Terminal transitions use the reward alone.
pub fn td_targets<T: Scalar>(
    transitions: &[&Transition],
    online: &Network<T>,
    target: &Network<T>,
    gamma: f64,
) -> Result<Vec<f64>, NnError> {
    transitions
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let best = argmax(&q_values(online, &t.next_obs)?);
            let q_next = q_values(target, &t.next_obs)?[best].as_f64();
            Ok(t.reward + gamma * q_next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnLearnReport {
    pub loss: f64,
    pub td_errors: Vec<f64>,
    pub delta_norm: f64,
    pub param_norm: f64,
    pub synced_target: bool,
}

/// One independent learner: online/target networks and a private buffer.
#[derive(Debug, Clone)]
pub struct DqnAgent<T: Scalar> {
    cfg: DqnConfig,
    online: Network<T>,
    target: Network<T>,
    adam: Adam<T>,
    buffer: PrioritizedBuffer<Transition>,
    learn_steps: u64,
}

impl<T: Scalar> DqnAgent<T> {
    pub fn new<R: Rng + ?Sized>(cfg: DqnConfig, trunk: TrunkSpec, init_rng: &mut R) -> Result<Self, DqnError> {
        cfg.validate()?;
        let spec = NetworkSpec::new(trunk, HeadKind::Dueling);
        spec.validate()?;
        let online = Network::init(spec, init_rng);
        Ok(Self::from_network(cfg, online))
    }

    pub fn from_network(cfg: DqnConfig, online: Network<T>) -> Self {
        let adam = Adam::new(&online, AdamConfig::default());
        let buffer = PrioritizedBuffer::new(cfg.buffer_capacity, cfg.per_alpha);
        Self { target: online.clone(), online, adam, buffer, learn_steps: 0, cfg }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn online(&self) -> &Network<T> {
        &self.online
    }

    pub fn target(&self) -> &Network<T> {
        &self.target
    }

    pub fn buffer(&self) -> &PrioritizedBuffer<Transition> {
        &self.buffer
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn q_values(&self, obs: &Observation) -> Result<[T; N_ACTIONS], NnError> {
        q_values(&self.online, obs)
    }

    /// ε-greedy: uniform action with probability ε, else the greedy action
    /// (lowest index on ties).
    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, epsilon: f64, rng: &mut R) -> Result<Action, NnError> {
        if rng.gen::<f64>() < epsilon {
            return Ok(Action::ALL[rng.gen_range(0..N_ACTIONS)]);
        }
        Ok(Action::ALL[argmax(&self.q_values(obs)?)])
    }

    pub fn store(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.cfg.batch
    }

    /// Samples a prioritized batch, takes one gradient step on the
    /// importance-weighted Huber loss, refreshes priorities and syncs the
    /// target network every `target_sync_period` steps.
    pub fn learn_step<R: Rng + ?Sized>(&mut self, beta: f64, rng: &mut R) -> Result<DqnLearnReport, DqnError> {
        let batch = self.buffer.sample(self.cfg.batch, beta, rng)?;
        let transitions: Vec<&Transition> = batch.indices.iter().map(|&i| self.buffer.get(i)).collect();
        let targets = td_targets(&transitions, &self.online, &self.target, self.cfg.gamma)?;

        let n = transitions.len() as f64;
        let kappa = self.cfg.huber_delta;
        let mut grads = self.online.new_gradients();
        let mut loss = 0.0;
        let mut td_errors = Vec::with_capacity(transitions.len());
        for ((t, &y), &w) in transitions.iter().zip(&targets).zip(&batch.weights) {
            let (out, cache) = self.online.forward(&t.obs)?;
            let q = dueling_aggregate(out.scalar, &out.vector);
            let delta = y - q[t.action].as_f64();
            loss += w * huber(delta, kappa);
            td_errors.push(delta);
            // ∂L/∂Q(a) = −w·huber'(δ)/n; Q(a) = V + A(a) − mean(A)
            let g = -w * huber_grad(delta, kappa) / n;
            let mut hg = HeadGrad::zero();
            hg.scalar = T::lit(g);
            for (j, v) in hg.vector.iter_mut().enumerate() {
                let onehot = if j == t.action { 1.0 } else { 0.0 };
                *v = T::lit(g * (onehot - 1.0 / N_ACTIONS as f64));
            }
            self.online.backward(&cache, &hg, &mut grads)?;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(DqnError::NonFiniteLoss(loss));
        }
        let priorities: Vec<f64> = td_errors.iter().map(|d| d.abs() + self.cfg.per_epsilon).collect();
        self.buffer.update_priorities(&batch.indices, &priorities);

        let info = self.adam.step(&mut self.online, &grads, self.cfg.lr, None)?;
        self.learn_steps += 1;
        let synced_target = self.learn_steps.is_multiple_of(self.cfg.target_sync_period);
        if synced_target {
            self.target = self.online.clone();
        }
        Ok(DqnLearnReport { loss, td_errors, delta_norm: info.delta_norm, param_norm: info.param_norm, synced_target })
    }
}
