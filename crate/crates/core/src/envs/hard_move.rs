//! Point agent driven by `n` equally spaced actuators.
//!
//! Discrete action `k` is a bitmask of active actuators, so `K = 2ⁿ`; `z`
//! carries one signed magnitude per actuator. Actuator `i` pushes along
//! angle `2πi/n`; inactive coordinates of `z` are ignored.
//!
//! State `[x, y, tx, ty, dist, t]` in the arena `[-1, 1]²`. Every step costs
//! the remaining distance to the target; entering the target disk pays
//! `GOAL_REWARD` and ends the episode.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;

use super::{step_index, tag, time_fraction, EnvId, EnvSpec, StepResult};
use crate::error::{Error, Result};

pub const ARENA: f64 = 1.0;
pub const ACTUATOR_STEP: f64 = 0.1;
pub const TARGET_RADIUS: f64 = 0.1;
pub const GOAL_REWARD: f64 = 10.0;
pub const MIN_START_DISTANCE: f64 = 1.0;
pub const MAX_STEPS: usize = 40;

#[derive(Clone, Debug)]
pub struct HardMove {
    pub spec: EnvSpec,
    n: usize,
    directions: Vec<(f64, f64)>,
}

impl HardMove {
    pub const MAX_ACTUATORS: usize = 10;

    pub fn new(n: usize) -> Result<Self> {
        if !(1..=Self::MAX_ACTUATORS).contains(&n) {
            return Err(Error::Config(format!(
                "hard_move actuator count must be in 1..={}, got {n}",
                Self::MAX_ACTUATORS
            )));
        }
        let k = 1usize << n;
        let diag = 2.0 * ARENA * std::f64::consts::SQRT_2;
        let spec = EnvSpec {
            id: EnvId::HardMove(n),
            state_dim: 6,
            num_actions: k,
            param_dims: vec![n; k],
            param_bounds: vec![vec![(-1.0, 1.0); n]; k],
            max_episode_steps: MAX_STEPS,
            reward_range: (-diag, GOAL_REWARD),
            state_low: vec![-ARENA, -ARENA, -ARENA, -ARENA, 0.0, 0.0],
            state_high: vec![ARENA, ARENA, ARENA, ARENA, diag, 1.0],
        };
        let directions = (0..n)
            .map(|i| {
                let a = TAU * i as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect();
        Ok(Self { spec, n, directions })
    }

    pub fn actuators(&self) -> usize {
        self.n
    }

    /// Unit push direction of each actuator.
    pub fn directions(&self) -> &[(f64, f64)] {
        &self.directions
    }

    /// Raw displacement for bitmask `k` and magnitudes `z`.
    pub fn displacement(&self, k: usize, z: &[f64]) -> (f64, f64) {
        let mut d = (0.0, 0.0);
        for (i, &(cx, cy)) in self.directions.iter().enumerate() {
            if k >> i & 1 == 1 {
                d.0 += ACTUATOR_STEP * z[i] * cx;
                d.1 += ACTUATOR_STEP * z[i] * cy;
            }
        }
        d
    }

    pub(crate) fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..4).map(|_| rng.random_range(-ARENA..=ARENA)).collect();
            let d = (p[0] - p[2]).hypot(p[1] - p[3]);
            if d >= MIN_START_DISTANCE {
                return vec![p[0], p[1], p[2], p[3], d, 0.0];
            }
        }
    }

    pub(crate) fn step(&self, s: &[f64], k: usize, z: &[f64]) -> StepResult {
        let mut info = BTreeMap::new();
        let t = step_index(s[5], MAX_STEPS) + 1;
        let (dx, dy) = self.displacement(k, z);
        let x = (s[0] + dx).clamp(-ARENA, ARENA);
        let y = (s[1] + dy).clamp(-ARENA, ARENA);
        let dist = (x - s[2]).hypot(y - s[3]);
        let next = vec![x, y, s[2], s[3], dist, time_fraction(t, MAX_STEPS)];
        let success = dist <= TARGET_RADIUS;
        let reward = if success {
            tag(&mut info, "success", "true");
            tag(&mut info, "outcome", "success");
            GOAL_REWARD
        } else {
            -dist
        };
        let timeout = t >= MAX_STEPS;
        if timeout && !success {
            tag(&mut info, "outcome", "timeout");
        }
        StepResult {
            next_state: next,
            reward,
            done: success || timeout,
            info,
        }
    }
}
