//! Seeded training runs: joint episode loop over independent learners,
//! convergence tracking, sweeps and on-disk artifacts.

mod config;
mod episode;
mod experiment;
mod learner;
mod rng;
mod tracker;

pub use config::{Algo, ExperimentConfig, RunPoint, SweepConfig};
pub use episode::{run_episode, AgentEpisode, EpisodeRecord, EpisodeSinks};
pub use experiment::{
    build_env, build_learners, run_experiment, run_single, AgentTotals, Assumptions, PopulationTotals, RunInfo,
    RunOutcome, RunSummary, INCOMPLETE_MARKER,
};
pub use learner::{A2cLearner, DqnLearner, EpisodeLog, Feedback, Learner, LearnerError, ScriptedLearner, UpdateInfo};
pub use rng::{derive_rngs, derive_stream, RunRngs, StreamLabel};
pub use tracker::{ConvergenceConfig, ConvergenceTracker};

use std::path::PathBuf;

use crate::env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("agent {agent}: {source}")]
    Learner { agent: usize, source: LearnerError },
    #[error("{got} learners for {expected} agents")]
    LearnerCount { expected: usize, got: usize },
    #[error("agent {agent}: non-finite loss {loss} in episode {episode}")]
    NonFiniteLoss { agent: usize, episode: usize, loss: f64 },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
