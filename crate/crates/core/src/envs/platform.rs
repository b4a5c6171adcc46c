//! Side-scrolling platform course: three platforms separated by two gaps,
//! one patrolling enemy on each of the second and third platforms.
//!
//! State `[x, e1, d1, e2, d2, alive, t]`: agent position, enemy positions
//! and directions (±1), alive flag and elapsed-time fraction.
//!
//! * `run(dx)`: ground movement; dies when the path touches an enemy or the
//!   agent ends over a gap.
//! * `hop(dx)`: short jump over enemies; dies when landing in a gap or on an
//!   enemy.
//! * `leap(dx)`: long jump over gaps and enemies; same landing rule as hop.
//!
//! Reward is forward progress, so an episode return is the fraction of the
//! course covered, in `[0, 1]`.

use std::collections::BTreeMap;

use rand::Rng;

use super::{step_index, tag, time_fraction, EnvId, EnvSpec, StepResult};

pub const PLATFORMS: [(f64, f64); 3] = [(0.0, 0.30), (0.40, 0.65), (0.75, 1.0)];
/// Patrol range of each enemy's center.
pub const PATROLS: [(f64, f64); 2] = [(0.45, 0.62), (0.80, 0.95)];
pub const ENEMY_SPEED: f64 = 0.02;
pub const ENEMY_HALF_WIDTH: f64 = 0.03;
pub const RUN_MAX: f64 = 0.12;
pub const HOP_MAX: f64 = 0.10;
pub const LEAP_MAX: f64 = 0.30;
pub const MAX_STEPS: usize = 40;

pub const RUN: usize = 0;
pub const HOP: usize = 1;
pub const LEAP: usize = 2;

#[derive(Clone, Debug)]
pub struct Platform {
    pub spec: EnvSpec,
}

impl Default for Platform {
    fn default() -> Self {
        Self::new()
    }
}

fn over_gap(x: f64) -> bool {
    !PLATFORMS.iter().any(|&(lo, hi)| x >= lo && x <= hi)
}

/// Moves an enemy one tick, reflecting at the patrol ends.
fn patrol(pos: f64, dir: f64, range: (f64, f64)) -> (f64, f64) {
    let mut p = pos + dir * ENEMY_SPEED;
    let mut d = dir;
    if p > range.1 {
        p = 2.0 * range.1 - p;
        d = -1.0;
    } else if p < range.0 {
        p = 2.0 * range.0 - p;
        d = 1.0;
    }
    (p, d)
}

impl Platform {
    pub fn new() -> Self {
        let spec = EnvSpec {
            id: EnvId::Platform,
            state_dim: 7,
            num_actions: 3,
            param_dims: vec![1, 1, 1],
            param_bounds: vec![vec![(0.0, RUN_MAX)], vec![(0.0, HOP_MAX)], vec![(0.0, LEAP_MAX)]],
            max_episode_steps: MAX_STEPS,
            reward_range: (0.0, LEAP_MAX),
            state_low: vec![0.0, 0.0, -1.0, 0.0, -1.0, 0.0, 0.0],
            state_high: vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        };
        Self { spec }
    }

    pub(crate) fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut s = vec![0.0; 7];
        for (i, range) in PATROLS.iter().enumerate() {
            s[1 + 2 * i] = rng.random_range(range.0..=range.1);
            s[2 + 2 * i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        s[5] = 1.0;
        s
    }

    pub(crate) fn step(&self, s: &[f64], k: usize, z: &[f64]) -> StepResult {
        let mut info = BTreeMap::new();
        let t = step_index(s[6], MAX_STEPS) + 1;
        let mut next = s.to_vec();
        next[6] = time_fraction(t, MAX_STEPS);
        if s[5] < 0.5 || s[0] >= 1.0 {
            // absorbing terminal states
            return StepResult {
                next_state: next,
                reward: 0.0,
                done: true,
                info,
            };
        }
        let mut enemies = [0.0; 2];
        for (i, range) in PATROLS.iter().enumerate() {
            let (p, d) = patrol(s[1 + 2 * i], s[2 + 2 * i], *range);
            next[1 + 2 * i] = p;
            next[2 + 2 * i] = d;
            enemies[i] = p;
        }
        let x = s[0];
        let x_new = (x + z[0]).min(1.0);
        let touches = |lo: f64, hi: f64| {
            enemies
                .iter()
                .any(|&e| hi >= e - ENEMY_HALF_WIDTH && lo <= e + ENEMY_HALF_WIDTH)
        };
        let dead = if x_new >= 1.0 {
            false
        } else {
            match k {
                RUN => touches(x, x_new) || over_gap(x_new),
                _ => touches(x_new, x_new) || over_gap(x_new),
            }
        };
        let (reward, done) = if dead {
            next[5] = 0.0;
            tag(&mut info, "outcome", "death");
            (0.0, true)
        } else {
            next[0] = x_new;
            if x_new >= 1.0 {
                tag(&mut info, "outcome", "success");
                tag(&mut info, "success", "true");
            }
            (x_new - x, x_new >= 1.0)
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
