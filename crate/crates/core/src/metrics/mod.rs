//! Specialization and fairness statistics over run artifacts, plus text
//! rendering of recorded frames.

mod analyze;
mod render;

pub use analyze::{analyze, load_run, render_table, GroupRow, RunError, RunStats, EPISODES_HEADER, TABLE_HEADER};
pub use render::{render_frame_text, replay_render};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("fairness is undefined when every total is zero")]
    AllZero,
    #[error("fairness needs at least one non-negative, finite total")]
    InvalidTotals,
    #[error("empty window")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub t1: u64,
    pub t2: u64,
}

impl TaskCounts {
    pub fn new(t1: u64, t2: u64) -> Self {
        Self { t1, t2 }
    }

    pub fn total(self) -> u64 {
        self.t1 + self.t2
    }
}

impl std::ops::AddAssign for TaskCounts {
    fn add_assign(&mut self, o: Self) {
        self.t1 += o.t1;
        self.t2 += o.t2;
    }
}

/// `|t1 − t2| / (t1 + t2)`; an agent that completed nothing scores 0.
pub fn specialization(c: TaskCounts) -> f64 {
    if c.total() == 0 {
        return 0.0;
    }
    c.t1.abs_diff(c.t2) as f64 / c.total() as f64
}

/// Unweighted mean of per-agent specialization.
pub fn population_specialization(per_agent: &[TaskCounts]) -> Result<f64, MetricsError> {
    if per_agent.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    Ok(per_agent.iter().map(|&c| specialization(c)).sum::<f64>() / per_agent.len() as f64)
}

/// Jain's index `(Σx)² / (n·Σx²)`.
pub fn fairness(totals: &[f64]) -> Result<f64, MetricsError> {
    if totals.is_empty() || totals.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(MetricsError::InvalidTotals);
    }
    let sum: f64 = totals.iter().sum();
    if sum == 0.0 {
        return Err(MetricsError::AllZero);
    }
    let sq: f64 = totals.iter().map(|x| x * x).sum();
    Ok(sum * sum / (totals.len() as f64 * sq))
}

/// Fairness over per-agent task completions; `None` when nobody completed a task.
pub fn task_fairness(per_agent: &[TaskCounts]) -> Option<f64> {
    let totals: Vec<f64> = per_agent.iter().map(|c| c.total() as f64).collect();
    fairness(&totals).ok()
}
