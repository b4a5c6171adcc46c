use log::info;
use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::planner::PlannerConfig;
use crate::world_model::WorldModelConfig;

/// Per-environment defaults for the method's own hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvDefaults {
    pub lambda: f64,
    pub mu: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub smoothing_threshold: u64,
    pub horizon: usize,
}

pub fn env_defaults(id: EnvId) -> EnvDefaults {
    let base = EnvDefaults {
        lambda: 0.4,
        mu: 0.5,
        eta: 0.01,
        epsilon: 0.1,
        smoothing_threshold: 10_000,
        horizon: 5,
    };
    match id {
        EnvId::Platform => EnvDefaults {
            lambda: 0.7,
            horizon: 8,
            ..base
        },
        EnvId::CatchPoint => base,
        EnvId::HardMove(n) if n <= 4 => EnvDefaults {
            eta: 0.05,
            epsilon: 0.3,
            smoothing_threshold: 50_000,
            ..base
        },
        EnvId::HardMove(n) if n <= 6 => EnvDefaults {
            eta: 0.05,
            epsilon: 0.3,
            smoothing_threshold: 100_000,
            ..base
        },
        EnvId::HardMove(_) => EnvDefaults {
            eta: 0.05,
            epsilon: 0.5,
            smoothing_threshold: 100_000,
            ..base
        },
    }
}

/// Switches that disable or force parts of the method.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_smoothing: bool,
    pub always_smoothing: bool,
    pub no_mi: bool,
    pub no_flex_loss: bool,
}

impl Ablations {
    pub const NAMES: [&'static str; 4] = ["no_smoothing", "always_smoothing", "no_mi", "no_flex_loss"];

    pub fn set(&mut self, name: &str) -> Result<()> {
        match name {
            "no_smoothing" => self.no_smoothing = true,
            "always_smoothing" => self.always_smoothing = true,
            "no_mi" => self.no_mi = true,
            "no_flex_loss" => self.no_flex_loss = true,
            "none" => {}
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation {name:?} (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn active(&self) -> Vec<&'static str> {
        let flags = [self.no_smoothing, self.always_smoothing, self.no_mi, self.no_flex_loss];
        Self::NAMES.iter().zip(flags).filter(|(_, on)| *on).map(|(n, _)| *n).collect()
    }
}

/// Replay-buffer attack settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialInjection {
    pub ratio: f64,
    pub strength: f64,
}

/// Full training configuration. Fields left as `None` in a file are filled
/// from [`env_defaults`] by [`TrainConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvId,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Smoothing is active once the env step count exceeds this.
    #[serde(default)]
    pub smoothing_threshold: Option<u64>,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::total_env_steps")]
    pub total_env_steps: u64,
    #[serde(default = "defaults::warmup_steps")]
    pub warmup_steps: u64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::one")]
    pub model_updates_per_env_step: usize,
    #[serde(default = "defaults::capacity")]
    pub replay_capacity: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ablations: Ablations,
    #[serde(default)]
    pub adversarial: Option<AdversarialInjection>,
    #[serde(default = "defaults::metrics_interval")]
    pub metrics_interval: u64,
    /// Periodic checkpoints every this many env steps; 0 disables them.
    #[serde(default)]
    pub checkpoint_interval: u64,
    #[serde(default = "defaults::eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "defaults::model_lr")]
    pub model_lr: f64,
    #[serde(default = "defaults::model_lr")]
    pub critic_lr: f64,
    #[serde(default = "defaults::model_lr")]
    pub planner_lr: f64,
    #[serde(default = "defaults::hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "defaults::critic_steps")]
    pub critic_steps: usize,
    #[serde(default = "defaults::n_model_samples")]
    pub n_model_samples: usize,
    #[serde(default = "defaults::critic_penalty")]
    pub critic_penalty_weight: f64,
    #[serde(default = "defaults::n_candidates")]
    pub n_candidates: usize,
    #[serde(default = "defaults::n_elite")]
    pub n_elite: usize,
    #[serde(default = "defaults::plan_iters")]
    pub plan_iters: usize,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::temperature_decay")]
    pub temperature_decay: f64,
    #[serde(default = "defaults::temperature_floor")]
    pub temperature_floor: f64,
    #[serde(default = "defaults::uniform_action_prob")]
    pub uniform_action_prob: f64,
}

mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn alpha() -> f64 {
        1.0
    }
    pub fn total_env_steps() -> u64 {
        20_000
    }
    pub fn warmup_steps() -> u64 {
        500
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn one() -> usize {
        1
    }
    pub fn capacity() -> usize {
        100_000
    }
    pub fn metrics_interval() -> u64 {
        100
    }
    pub fn eval_episodes() -> usize {
        10
    }
    pub fn model_lr() -> f64 {
        1e-3
    }
    pub fn hidden() -> Vec<usize> {
        vec![32, 32]
    }
    pub fn critic_steps() -> usize {
        5
    }
    pub fn n_model_samples() -> usize {
        4
    }
    pub fn critic_penalty() -> f64 {
        100.0
    }
    pub fn n_candidates() -> usize {
        64
    }
    pub fn n_elite() -> usize {
        6
    }
    pub fn plan_iters() -> usize {
        6
    }
    pub fn temperature() -> f64 {
        1.0
    }
    pub fn temperature_decay() -> f64 {
        0.995
    }
    pub fn temperature_floor() -> f64 {
        0.3
    }
    pub fn uniform_action_prob() -> f64 {
        0.1
    }
}

impl TrainConfig {
    /// Defaults for `env` with every table value filled in.
    pub fn for_env(env: EnvId) -> Self {
        let mut table = toml::Table::new();
        table.insert("env".into(), toml::Value::String(env.to_string()));
        Self::from_table(table).expect("defaults are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (TOML values, dotted keys
    /// for nested tables) and resolves defaults.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: TrainConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))?;
        let cfg = cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills unset per-environment values from the defaults table.
    pub fn resolve(mut self) -> Self {
        let d = env_defaults(self.env);
        macro_rules! fill {
            ($field:ident) => {
                if self.$field.is_none() {
                    info!("{} not set; using the {} default {}", stringify!($field), self.env, d.$field);
                    self.$field = Some(d.$field);
                }
            };
        }
        fill!(lambda);
        fill!(mu);
        fill!(eta);
        fill!(epsilon);
        fill!(smoothing_threshold);
        fill!(horizon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lambda", self.lambda()),
            ("mu", self.mu()),
            ("eta", self.eta()),
            ("epsilon", self.epsilon()),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return cfg(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return cfg(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.horizon() == 0 {
            return cfg("horizon must be >= 1".into());
        }
        if self.batch_size == 0 {
            return cfg("batch_size must be >= 1".into());
        }
        if self.replay_capacity < self.horizon() {
            return cfg(format!("replay_capacity must be >= horizon ({})", self.horizon()));
        }
        if self.metrics_interval == 0 {
            return cfg("metrics_interval must be >= 1".into());
        }
        if self.ablations.no_smoothing && self.ablations.always_smoothing {
            return cfg("no_smoothing and always_smoothing are mutually exclusive".into());
        }
        if let Some(a) = self.adversarial {
            if !(0.0..=1.0).contains(&a.ratio) {
                return cfg(format!("adversarial.ratio must be in [0, 1], got {}", a.ratio));
            }
            if !(a.strength >= 0.0) {
                return cfg(format!("adversarial.strength must be >= 0, got {}", a.strength));
            }
        }
        for (name, v) in [
            ("model_lr", self.model_lr),
            ("critic_lr", self.critic_lr),
            ("planner_lr", self.planner_lr),
        ] {
            if !(v > 0.0) {
                return cfg(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.n_model_samples == 0 {
            return cfg("n_model_samples must be >= 1".into());
        }
        self.planner_config().validate()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.expect("resolved")
    }
    pub fn mu(&self) -> f64 {
        self.mu.expect("resolved")
    }
    pub fn eta(&self) -> f64 {
        self.eta.expect("resolved")
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon.expect("resolved")
    }
    pub fn smoothing_threshold(&self) -> u64 {
        self.smoothing_threshold.expect("resolved")
    }
    pub fn horizon(&self) -> usize {
        self.horizon.expect("resolved")
    }

    /// λ after ablations.
    pub fn effective_lambda(&self) -> f64 {
        if self.ablations.no_flex_loss {
            0.0
        } else {
            self.lambda()
        }
    }

    /// η after ablations.
    pub fn effective_eta(&self) -> f64 {
        if self.ablations.no_mi {
            0.0
        } else {
            self.eta()
        }
    }

    /// Whether reward smoothing is applied at env step count `timestep`.
    pub fn smoothing_active(&self, timestep: u64) -> bool {
        if self.ablations.no_smoothing || self.mu() == 0.0 {
            false
        } else {
            self.ablations.always_smoothing || timestep > self.smoothing_threshold()
        }
    }

    pub fn model_config(&self) -> WorldModelConfig {
        let mut cfg = WorldModelConfig {
            hidden_dims: self.hidden_dims.clone(),
            critic_steps: self.critic_steps,
            n_model_samples: self.n_model_samples,
            ..WorldModelConfig::default()
        };
        cfg.adam.lr = self.model_lr;
        cfg.critic.adam.lr = self.critic_lr;
        cfg.critic.penalty_weight = self.critic_penalty_weight;
        cfg
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let mut cfg = PlannerConfig {
            n_candidates: self.n_candidates,
            n_elite: self.n_elite,
            iters: self.plan_iters,
            horizon: self.horizon(),
            gamma: self.gamma,
            eta: self.effective_eta(),
            temperature: self.temperature,
            temperature_decay: self.temperature_decay,
            temperature_floor: self.temperature_floor,
            uniform_action_prob: self.uniform_action_prob,
            hidden_dims: self.hidden_dims.clone(),
            ..PlannerConfig::default()
        };
        cfg.adam.lr = self.planner_lr;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Sets `key=value` in `table`; the value is parsed as TOML, falling back to
/// a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key in {assignment:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
