//! Multitask multi-agent grid world with independent learners.

pub mod a2c;
pub mod cli;
pub mod dqn;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod nn;
