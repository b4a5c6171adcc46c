//! Learned dynamics, reward model and Lipschitz critic.
//!
//! The dynamics head predicts a Gaussian over the next state as
//! `s + delta` with a bounded log-variance; the reward head predicts the
//! scalar reward. Both condition on `(s, one-hot(k), z zero-padded)`.

mod critic;
mod losses;
mod metrics;
mod segment;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, HybridAction};
use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, Matrix, Mlp, MlpSpec, ParamBlock, ParamVars, Scaler, Tape, Var};

pub use critic::{
    critic_ascent, critic_spec, exploration_objective, exploration_terms, exploration_value, layer_spectral_norms,
    spectral_penalty, CriticConfig, CriticReport, CRITIC_HIDDEN,
};
pub use losses::{gate_running_max, LossReport, UpdateOptions, MAX_REWARD_INIT};
pub use metrics::{LossLog, LOSS_CSV_HEADER};
pub use segment::{Segment, Transition};

pub const LOG_VAR_MIN: f64 = -6.0;
pub const LOG_VAR_MAX: f64 = 2.0;

pub const DYNAMICS_BLOCK: &str = "dynamics";
pub const REWARD_BLOCK: &str = "reward";
pub const CRITIC_BLOCK: &str = "critic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldModelConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub adam: AdamConfig,
    pub critic: CriticConfig,
    /// Critic ascent steps per model update.
    pub critic_steps: usize,
    /// Stochastic model samples per true transition in the exploration loss.
    pub n_model_samples: usize,
    /// Log-variance of a freshly initialized dynamics head.
    pub init_log_var: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 32],
            activation: Activation::LeakyReLU,
            adam: AdamConfig::default(),
            critic: CriticConfig::default(),
            critic_steps: 5,
            n_model_samples: 4,
            init_log_var: -5.0,
        }
    }
}

/// Sizes that fix the network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub state_dim: usize,
    pub num_actions: usize,
    pub max_param_dim: usize,
}

impl ModelDims {
    pub fn of(spec: &EnvSpec) -> Self {
        Self {
            state_dim: spec.state_dim,
            num_actions: spec.num_actions,
            max_param_dim: spec.max_param_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.num_actions + self.max_param_dim
    }
}

/// One-step model prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
    pub sample: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WorldModel {
    pub dims: ModelDims,
    pub cfg: WorldModelConfig,
    pub dynamics: Mlp,
    pub reward: Mlp,
    pub critic: Mlp,
    critic_init: ParamBlock,
    input: Scaler,
}

const LV_MID: f64 = 0.5 * (LOG_VAR_MIN + LOG_VAR_MAX);
const LV_HALF: f64 = 0.5 * (LOG_VAR_MAX - LOG_VAR_MIN);

/// Maps an unbounded head output into `(LOG_VAR_MIN, LOG_VAR_MAX)`.
fn bound_log_var(raw: f64) -> f64 {
    LV_MID + LV_HALF * (raw / LV_HALF).tanh()
}

fn unbound_log_var(lv: f64) -> f64 {
    let y = ((lv - LV_MID) / LV_HALF).clamp(-0.999_999, 0.999_999);
    LV_HALF * y.atanh()
}

impl WorldModel {
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, cfg: WorldModelConfig, rng: &mut R) -> Result<Self> {
        if dims.state_dim == 0 || dims.num_actions == 0 {
            return Err(Error::Parameter(format!("invalid model dims {dims:?}")));
        }
        if cfg.n_model_samples == 0 {
            return Err(Error::Parameter("n_model_samples must be >= 1".into()));
        }
        let s = dims.state_dim;
        let dyn_spec = MlpSpec::new(dims.input_dim(), cfg.hidden_dims.clone(), 2 * s, cfg.activation);
        let rew_spec = MlpSpec::new(dims.input_dim(), cfg.hidden_dims.clone(), 1, cfg.activation);
        let mut dynamics = Mlp::new(DYNAMICS_BLOCK, dyn_spec, rng)?;
        let raw = unbound_log_var(cfg.init_log_var);
        let last = dynamics.params.layers.last_mut().expect("at least one layer");
        last.bias.data_mut()[s..].iter_mut().for_each(|b| *b = raw);
        let reward = Mlp::new(REWARD_BLOCK, rew_spec, rng)?;
        let critic = Mlp::new(CRITIC_BLOCK, critic_spec(s), rng)?;
        Ok(Self {
            critic_init: critic.params.clone(),
            dims,
            cfg,
            dynamics,
            reward,
            critic,
            input: Scaler::identity(s),
        })
    }

    /// Model for `spec`, with state inputs rescaled from the declared state
    /// box to `[-1, 1]`.
    pub fn for_env<R: Rng + ?Sized>(spec: &EnvSpec, cfg: WorldModelConfig, rng: &mut R) -> Result<Self> {
        let mut m = Self::new(ModelDims::of(spec), cfg, rng)?;
        m.set_input_box(&spec.state_low, &spec.state_high)?;
        Ok(m)
    }

    pub fn set_input_box(&mut self, low: &[f64], high: &[f64]) -> Result<()> {
        let s = self.dims.state_dim;
        if low.len() != s || high.len() != s {
            return Err(Error::shape("input box", s, low.len().max(high.len())));
        }
        self.input = Scaler::from_box(low, high)?;
        Ok(())
    }

    /// Replaces the network parameters, e.g. from a checkpoint.
    pub fn load_blocks(&mut self, dynamics: ParamBlock, reward: ParamBlock, critic: ParamBlock) -> Result<()> {
        self.dynamics = Mlp::from_params(self.dynamics.spec.clone(), dynamics)?;
        self.reward = Mlp::from_params(self.reward.spec.clone(), reward)?;
        self.critic = Mlp::from_params(self.critic.spec.clone(), critic)?;
        Ok(())
    }

    /// Parameters the critic is restored to after divergence.
    pub fn critic_init(&self) -> &ParamBlock {
        &self.critic_init
    }

    pub fn set_critic_init(&mut self, block: ParamBlock) -> Result<()> {
        Mlp::from_params(self.critic.spec.clone(), block.clone())?;
        self.critic_init = block;
        Ok(())
    }

    pub fn input_scaler(&self) -> &Scaler {
        &self.input
    }

    /// Restores the critic to its initial parameters.
    pub fn reset_critic(&mut self) {
        self.critic.params = self.critic_init.clone();
    }

    pub fn encode_action(&self, a: &HybridAction) -> Result<Vec<f64>> {
        let (k, p) = (self.dims.num_actions, self.dims.max_param_dim);
        if a.k >= k {
            return Err(Error::Parameter(format!("discrete action {} out of range (K = {k})", a.k)));
        }
        if a.z.len() > p {
            return Err(Error::shape("action parameters", format!("<= {p}"), a.z.len()));
        }
        let mut v = vec![0.0; k + p];
        v[a.k] = 1.0;
        v[k..k + a.z.len()].copy_from_slice(&a.z);
        Ok(v)
    }

    pub fn encode_actions<'a>(&self, actions: impl IntoIterator<Item = &'a HybridAction>) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = actions.into_iter().map(|a| self.encode_action(a)).collect::<Result<_>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.dims.num_actions + self.dims.max_param_dim));
        }
        Matrix::from_rows(&rows)
    }

    fn check_states(&self, states: &Matrix, actions: &Matrix) -> Result<()> {
        if states.cols() != self.dims.state_dim {
            return Err(Error::shape("model state input", self.dims.state_dim, states.cols()));
        }
        if actions.cols() != self.dims.num_actions + self.dims.max_param_dim {
            return Err(Error::shape(
                "model action input",
                self.dims.num_actions + self.dims.max_param_dim,
                actions.cols(),
            ));
        }
        if states.rows() != actions.rows() {
            return Err(Error::shape("model batch rows", states.rows(), actions.rows()));
        }
        if !states.all_finite() || !actions.all_finite() {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    fn network_input(&self, states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        self.input.apply(states).hcat(actions)
    }

    /// Batched next-state mean and log-variance.
    pub fn predict_batch(&self, states: &Matrix, actions: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_states(states, actions)?;
        let out = self.dynamics.forward_batch(&self.network_input(states, actions)?)?;
        let s = self.dims.state_dim;
        let mut mean = states.clone();
        let mut log_var = Matrix::zeros(states.rows(), s);
        for r in 0..states.rows() {
            let o = out.row(r);
            for (m, d) in mean.row_mut(r).iter_mut().zip(&o[..s]) {
                *m += d;
            }
            for (l, raw) in log_var.row_mut(r).iter_mut().zip(&o[s..]) {
                *l = bound_log_var(*raw);
            }
        }
        Ok((mean, log_var))
    }

    /// Batched predicted rewards.
    pub fn reward_batch(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        self.check_states(states, actions)?;
        Ok(self.reward.forward_batch(&self.network_input(states, actions)?)?.into_vec())
    }

    /// Mean prediction; the returned sample equals the mean.
    pub fn predict(&self, s: &[f64], a: &HybridAction) -> Result<Prediction> {
        let (mean, log_var) = self.predict_batch(&Matrix::row_vector(s), &Matrix::row_vector(&self.encode_action(a)?))?;
        let mean = mean.into_vec();
        Ok(Prediction {
            sample: mean.clone(),
            mean,
            log_var: log_var.into_vec(),
        })
    }

    /// Prediction with a reparameterized Gaussian sample.
    pub fn predict_sampled<R: Rng + ?Sized>(&self, s: &[f64], a: &HybridAction, rng: &mut R) -> Result<Prediction> {
        let mut p = self.predict(s, a)?;
        for ((x, m), lv) in p.sample.iter_mut().zip(&p.mean).zip(&p.log_var) {
            let e: f64 = rng.sample(StandardNormal);
            *x = m + (0.5 * lv).exp() * e;
        }
        Ok(p)
    }

    pub fn predict_reward(&self, s: &[f64], a: &HybridAction) -> Result<f64> {
        Ok(self.reward_batch(&Matrix::row_vector(s), &Matrix::row_vector(&self.encode_action(a)?))?[0])
    }

    fn tape_input(&self, tape: &mut Tape, s: Var, a: Var) -> Result<Var> {
        let sn = self.input.on_tape(tape, s)?;
        tape.concat(sn, a)
    }

    /// Dynamics on the tape: `(mean next state, bounded log-variance)`.
    pub fn dynamics_on_tape(&self, tape: &mut Tape, vars: &ParamVars, s: Var, a: Var) -> Result<(Var, Var)> {
        let x = self.tape_input(tape, s, a)?;
        let out = self.dynamics.forward_with(tape, x, vars)?;
        let sd = self.dims.state_dim;
        let delta = tape.slice(out, 0, sd)?;
        let raw = tape.slice(out, sd, sd)?;
        let mean = tape.add(s, delta)?;
        let squashed = tape.scale(raw, 1.0 / LV_HALF);
        let squashed = tape.act(squashed, Activation::Tanh);
        let spread = tape.scale(squashed, LV_HALF);
        let log_var = tape.offset(spread, LV_MID);
        Ok((mean, log_var))
    }

    /// Reward head on the tape, `n×1`.
    pub fn reward_on_tape(&self, tape: &mut Tape, vars: &ParamVars, s: Var, a: Var) -> Result<Var> {
        let x = self.tape_input(tape, s, a)?;
        self.reward.forward_with(tape, x, vars)
    }
}
