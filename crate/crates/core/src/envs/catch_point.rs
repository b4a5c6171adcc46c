//! Catch a static target point in the unit square with a limited number of
//! catch attempts.
//!
//! State `[ax, ay, tx, ty, chances, t]`. `move(v)` displaces the agent by
//! `MOVE_STEP · v` (with `v` projected onto the unit disk) at a small cost;
//! `catch` succeeds when the target is within `CATCH_RADIUS`, otherwise it
//! costs a chance.

use std::collections::BTreeMap;

use rand::Rng;

use super::{step_index, tag, time_fraction, EnvId, EnvSpec, StepResult};

pub const MOVE_STEP: f64 = 0.2;
pub const MOVE_COST: f64 = -0.05;
pub const CATCH_RADIUS: f64 = 0.15;
pub const CATCH_SUCCESS: f64 = 10.0;
pub const CATCH_FAIL: f64 = -1.0;
pub const CHANCES: f64 = 10.0;
pub const START_DISTANCE: (f64, f64) = (0.3, 0.9);
pub const MAX_STEPS: usize = 40;

pub const MOVE: usize = 0;
pub const CATCH: usize = 1;

#[derive(Clone, Debug)]
pub struct CatchPoint {
    pub spec: EnvSpec,
}

impl Default for CatchPoint {
    fn default() -> Self {
        Self::new()
    }
}

impl CatchPoint {
    pub fn new() -> Self {
        let spec = EnvSpec {
            id: EnvId::CatchPoint,
            state_dim: 6,
            num_actions: 2,
            param_dims: vec![2, 0],
            param_bounds: vec![vec![(-1.0, 1.0), (-1.0, 1.0)], vec![]],
            max_episode_steps: MAX_STEPS,
            reward_range: (CATCH_FAIL.min(MOVE_COST), CATCH_SUCCESS),
            state_low: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            state_high: vec![1.0, 1.0, 1.0, 1.0, CHANCES, 1.0],
        };
        Self { spec }
    }

    pub(crate) fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..=1.0)).collect();
            let d = (s[0] - s[2]).hypot(s[1] - s[3]);
            if d >= START_DISTANCE.0 && d <= START_DISTANCE.1 {
                return vec![s[0], s[1], s[2], s[3], CHANCES, 0.0];
            }
        }
    }

    pub(crate) fn step(&self, s: &[f64], k: usize, z: &[f64]) -> StepResult {
        let mut info = BTreeMap::new();
        let t = step_index(s[5], MAX_STEPS) + 1;
        let mut next = s.to_vec();
        next[5] = time_fraction(t, MAX_STEPS);
        let (reward, done) = if k == MOVE {
            let norm = z[0].hypot(z[1]).max(1.0);
            next[0] = (s[0] + MOVE_STEP * z[0] / norm).clamp(0.0, 1.0);
            next[1] = (s[1] + MOVE_STEP * z[1] / norm).clamp(0.0, 1.0);
            (MOVE_COST, false)
        } else if (s[0] - s[2]).hypot(s[1] - s[3]) <= CATCH_RADIUS {
            tag(&mut info, "success", "true");
            tag(&mut info, "outcome", "success");
            (CATCH_SUCCESS, true)
        } else {
            next[4] = (s[4] - 1.0).max(0.0);
            if next[4] <= 0.0 {
                tag(&mut info, "outcome", "out_of_chances");
            }
            (CATCH_FAIL, next[4] <= 0.0)
        };
        let timeout = t >= MAX_STEPS;
        if timeout && !done {
            tag(&mut info, "outcome", "timeout");
        }
        StepResult {
            next_state: next,
            reward,
            done: done || timeout,
            info,
        }
    }
}
