//! Model-based reinforcement learning for parameterized-action MDPs with a
//! Wasserstein-dual exploration loss, gated reward smoothing and a
//! mutual-information-boosted hybrid MPC planner.

pub mod cli;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod nn;
pub mod planner;
pub mod trainer;
pub mod world_model;

pub use error::{Error, Result};
