use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub window: usize,
    pub threshold: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { window: 200, threshold: 1e-4 }
    }
}

/// Moving average of relative update sizes `‖Δθ‖₂ / ‖θ‖₂` over the last
/// `window` updates. Converged the first time a full window averages below
/// the threshold; that episode is kept from then on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTracker {
    cfg: ConvergenceConfig,
    ratios: VecDeque<f64>,
    converged_at: Option<usize>,
    updates: u64,
}

impl ConvergenceTracker {
    pub fn new(cfg: ConvergenceConfig) -> Self {
        Self { ratios: VecDeque::with_capacity(cfg.window), cfg, converged_at: None, updates: 0 }
    }

    pub fn converged_at(&self) -> Option<usize> {
        self.converged_at
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn windowed_mean(&self) -> Option<f64> {
        (self.ratios.len() == self.cfg.window && self.cfg.window > 0)
            .then(|| self.ratios.iter().sum::<f64>() / self.cfg.window as f64)
    }

    /// Records one update. `theta_norm` must be positive.
    pub fn track(&mut self, delta_norm: f64, theta_norm: f64, episode: usize) {
        assert!(theta_norm > 0.0, "parameter norm must be positive");
        if self.ratios.len() == self.cfg.window {
            self.ratios.pop_front();
        }
        self.ratios.push_back(delta_norm / theta_norm);
        self.updates += 1;
        if self.converged_at.is_none() {
            if let Some(mean) = self.windowed_mean() {
                if mean < self.cfg.threshold {
                    self.converged_at = Some(episode);
                }
            }
        }
    }
}
