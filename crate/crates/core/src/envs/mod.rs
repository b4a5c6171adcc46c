//! Parameterized-action benchmark environments.
//!
//! Every environment is an immutable stepper: [`Env::step`] maps a state and
//! a hybrid action to the next state without hidden mutable state, so
//! `(seed, action sequence)` fixes the whole trajectory.

pub mod catch_point;
pub mod hard_move;
pub mod platform;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catch_point::CatchPoint;
pub use hard_move::HardMove;
pub use platform::Platform;

/// Discrete action index plus the continuous parameters attached to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub k: usize,
    pub z: Vec<f64>,
}

impl HybridAction {
    pub fn new(k: usize, z: Vec<f64>) -> Self {
        Self { k, z }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: BTreeMap<String, String>,
}

impl StepResult {
    pub fn has_tag(&self, key: &str) -> bool {
        self.info.contains_key(key)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvId {
    Platform,
    CatchPoint,
    HardMove(usize),
}

impl TryFrom<String> for EnvId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EnvId> for String {
    fn from(id: EnvId) -> String {
        id.to_string()
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "platform" => Ok(EnvId::Platform),
            "catch_point" => Ok(EnvId::CatchPoint),
            _ => {
                let n = s
                    .strip_prefix("hard_move:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown env id {s:?}")))?;
                if !(1..=HardMove::MAX_ACTUATORS).contains(&n) {
                    return Err(Error::Config(format!(
                        "hard_move actuator count must be in 1..={}, got {n}",
                        HardMove::MAX_ACTUATORS
                    )));
                }
                Ok(EnvId::HardMove(n))
            }
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvId::Platform => write!(f, "platform"),
            EnvId::CatchPoint => write!(f, "catch_point"),
            EnvId::HardMove(n) => write!(f, "hard_move:{n}"),
        }
    }
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub num_actions: usize,
    pub param_dims: Vec<usize>,
    /// `param_bounds[k][i]` is the closed interval for coordinate `i` of `z_k`.
    pub param_bounds: Vec<Vec<(f64, f64)>>,
    pub max_episode_steps: usize,
    /// Every per-step reward lies in this interval.
    pub reward_range: (f64, f64),
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
}

impl EnvSpec {
    pub fn max_param_dim(&self) -> usize {
        self.param_dims.iter().copied().max().unwrap_or(0)
    }

    /// Uniformly random discrete action with uniform parameters in bounds.
    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> HybridAction {
        let k = rng.random_range(0..self.num_actions);
        let z = self.param_bounds[k]
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect();
        HybridAction { k, z }
    }

    pub fn contains_state(&self, s: &[f64]) -> bool {
        s.len() == self.state_dim
            && s.iter()
                .zip(self.state_low.iter().zip(&self.state_high))
                .all(|(v, (lo, hi))| *v >= *lo - 1e-12 && *v <= *hi + 1e-12)
    }

    /// Checks `k` and the length of `z`, clips `z` into bounds.
    /// Returns the clipped parameters and whether any clipping happened.
    pub fn clip_action(&self, action: &HybridAction) -> Result<(Vec<f64>, bool)> {
        if action.k >= self.num_actions {
            return Err(Error::Parameter(format!(
                "discrete action {} out of range for {} (K = {})",
                action.k, self.id, self.num_actions
            )));
        }
        let bounds = &self.param_bounds[action.k];
        if action.z.len() != bounds.len() {
            return Err(Error::shape(
                format!("parameters of action {} in {}", action.k, self.id),
                bounds.len(),
                action.z.len(),
            ));
        }
        if let Some(v) = action.z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("action parameter {v}")));
        }
        let mut clipped = false;
        let z = action
            .z
            .iter()
            .zip(bounds)
            .map(|(&v, &(lo, hi))| {
                let c = v.clamp(lo, hi);
                clipped |= c != v;
                c
            })
            .collect();
        Ok((z, clipped))
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(Error::shape(format!("{} state", self.id), self.state_dim, s.len()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} state {s:?}", self.id)));
        }
        Ok(())
    }
}

/// One of the benchmark environments.
#[derive(Clone, Debug)]
pub enum Env {
    Platform(Platform),
    CatchPoint(CatchPoint),
    HardMove(HardMove),
}

impl Env {
    pub fn new(id: EnvId) -> Result<Self> {
        Ok(match id {
            EnvId::Platform => Env::Platform(Platform::new()),
            EnvId::CatchPoint => Env::CatchPoint(CatchPoint::new()),
            EnvId::HardMove(n) => Env::HardMove(HardMove::new(n)?),
        })
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Env::new(name.parse()?)
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Env::Platform(e) => &e.spec,
            Env::CatchPoint(e) => &e.spec,
            Env::HardMove(e) => &e.spec,
        }
    }

    /// Initial state; equal seeds give bitwise-equal states.
    pub fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Env::Platform(e) => e.reset(&mut rng),
            Env::CatchPoint(e) => e.reset(&mut rng),
            Env::HardMove(e) => e.reset(&mut rng),
        }
    }

    pub fn step(&self, state: &[f64], action: &HybridAction) -> Result<StepResult> {
        let spec = self.spec();
        spec.check_state(state)?;
        let (z, clipped) = spec.clip_action(action)?;
        let mut out = match self {
            Env::Platform(e) => e.step(state, action.k, &z),
            Env::CatchPoint(e) => e.step(state, action.k, &z),
            Env::HardMove(e) => e.step(state, action.k, &z),
        };
        if clipped {
            out.info.insert("clipped".into(), "true".into());
        }
        Ok(out)
    }
}

/// Step counter recovered from the time-fraction feature.
pub(crate) fn step_index(t_frac: f64, max_steps: usize) -> usize {
    (t_frac * max_steps as f64).round().max(0.0) as usize
}

pub(crate) fn time_fraction(step: usize, max_steps: usize) -> f64 {
    (step as f64 / max_steps as f64).min(1.0)
}

pub(crate) fn tag(info: &mut BTreeMap<String, String>, key: &str, value: &str) {
    info.insert(key.to_string(), value.to_string());
}

/// A recorded transition, as dumped to trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: Vec<f64>,
    pub action: HybridAction,
    pub reward: f64,
    pub done: bool,
}

/// Writes `step,s0..,k,z0..,reward,done` rows; `z` is zero-padded to the
/// largest parameter dimension of the environment.
pub fn write_trajectory_csv<W: Write>(out: &mut W, spec: &EnvSpec, steps: &[TrajectoryStep]) -> Result<()> {
    let zdim = spec.max_param_dim();
    let mut header = vec!["step".to_string()];
    header.extend((0..spec.state_dim).map(|i| format!("s{i}")));
    header.push("k".into());
    header.extend((0..zdim).map(|i| format!("z{i}")));
    header.push("reward".into());
    header.push("done".into());
    writeln!(out, "{}", header.join(","))?;
    for (t, st) in steps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(st.state.iter().map(|v| v.to_string()));
        row.push(st.action.k.to_string());
        row.extend((0..zdim).map(|i| st.action.z.get(i).copied().unwrap_or(0.0).to_string()));
        row.push(st.reward.to_string());
        row.push(u8::from(st.done).to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Runs one episode with `policy`, returning the transitions and the return.
pub fn run_episode(
    env: &Env,
    seed: u64,
    mut policy: impl FnMut(&[f64]) -> Result<HybridAction>,
) -> Result<(Vec<TrajectoryStep>, f64)> {
    let mut s = env.reset(seed);
    let mut steps = Vec::new();
    let mut ret = 0.0;
    for _ in 0..env.spec().max_episode_steps {
        let a = policy(&s)?;
        let r = env.step(&s, &a)?;
        ret += r.reward;
        steps.push(TrajectoryStep {
            state: s,
            action: a,
            reward: r.reward,
            done: r.done,
        });
        s = r.next_state;
        if r.done {
            break;
        }
    }
    Ok((steps, ret))
}
