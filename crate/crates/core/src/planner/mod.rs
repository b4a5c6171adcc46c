//! Hybrid-action model predictive control.
//!
//! A categorical head `π_β(k | s)` and a Gaussian head `p_θ(z | s, k)`
//! propose action sequences that are rolled out in the learned model and
//! scored with the model reward plus a weighted mutual-information bonus.
//! The heads are refit on the top-scoring candidates after every round.

mod heads;
mod rollout;

use serde::{Deserialize, Serialize};

use crate::nn::AdamConfig;

pub use heads::{HeadOutputs, HybridSample, Planner, PI_BLOCK, P_BLOCK, SIGMA_MAX, SIGMA_MIN};
pub use rollout::{aux_reward, elite_indices, CandidateTrajectory, RoundTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub n_candidates: usize,
    pub n_elite: usize,
    /// Rollout-and-refit rounds per decision.
    pub iters: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Weight of the auxiliary reward.
    pub eta: f64,
    pub temperature: f64,
    pub temperature_decay: f64,
    pub temperature_floor: f64,
    /// Chance that a candidate step draws its discrete action uniformly.
    #[serde(default)]
    pub uniform_action_prob: f64,
    pub hidden_dims: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_candidates: 64,
            n_elite: 6,
            iters: 6,
            horizon: 8,
            gamma: 0.99,
            eta: 0.01,
            temperature: 1.0,
            temperature_decay: 0.995,
            temperature_floor: 0.3,
            uniform_action_prob: 0.1,
            hidden_dims: vec![32, 32],
            adam: AdamConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::Config;
        if self.n_candidates == 0 {
            return Err(Config("n_candidates must be >= 1".into()));
        }
        if self.n_elite == 0 || self.n_elite > self.n_candidates {
            return Err(Config(format!(
                "n_elite must be in 1..={}, got {}",
                self.n_candidates, self.n_elite
            )));
        }
        if self.iters == 0 {
            return Err(Config("iters must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Config("horizon must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.eta >= 0.0) {
            return Err(Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.temperature > 0.0 && self.temperature_floor > 0.0) {
            return Err(Config("temperatures must be > 0".into()));
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay <= 1.0) {
            return Err(Config(format!("temperature_decay must be in (0, 1], got {}", self.temperature_decay)));
        }
        if !(0.0..=1.0).contains(&self.uniform_action_prob) {
            return Err(Config(format!("uniform_action_prob must be in [0, 1], got {}", self.uniform_action_prob)));
        }
        Ok(())
    }
}
