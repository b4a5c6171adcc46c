use rand::seq::index::sample;
use rand::Rng;

use super::ReplayBuffer;
use crate::error::Result;
use crate::nn::tape::sign;
use crate::world_model::{Transition, WorldModel};

/// FGSM-style attack on the stored `(s, z)` of one transition: the signed
/// gradient of the model's squared reward error, rescaled so that
/// `‖(s', z') − (s, z)‖₂ = strength · ‖(s, z)‖₂`. Zero gradient coordinates
/// get a random sign. Returns `false` when the transition was left alone
/// because `(s, z)` is zero.
pub fn perturb_transition<R: Rng + ?Sized>(
    model: &WorldModel,
    t: &mut Transition,
    strength: f64,
    rng: &mut R,
) -> Result<bool> {
    if strength == 0.0 {
        return Ok(true);
    }
    let norm = t.state.iter().chain(&t.action.z).map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(false);
    }
    let (gs, gz) = model.reward_error_gradient(&t.state, &t.action, t.reward)?;
    let dir: Vec<f64> = gs
        .iter()
        .chain(&gz)
        .map(|&g| {
            let d = sign(g);
            if d == 0.0 {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            } else {
                d
            }
        })
        .collect();
    let step = strength * norm / (dir.len() as f64).sqrt();
    let s_dim = t.state.len();
    for (v, d) in t.state.iter_mut().zip(&dir) {
        *v += step * d;
    }
    for (v, d) in t.action.z.iter_mut().zip(&dir[s_dim..]) {
        *v += step * d;
    }
    Ok(true)
}

/// Perturbs `round(ratio · |B|)` distinct stored transitions in place.
/// Next states and rewards are kept. Returns how many were changed.
pub fn inject_adversarial<R: Rng + ?Sized>(
    buffer: &mut ReplayBuffer,
    model: &WorldModel,
    ratio: f64,
    strength: f64,
    rng: &mut R,
) -> Result<usize> {
    let n = buffer.len();
    let count = ((ratio.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    if count == 0 {
        return Ok(0);
    }
    let mut idx = sample(rng, n, count).into_vec();
    idx.sort_unstable();
    let mut changed = 0;
    for i in idx {
        let t = buffer.get_mut(i).expect("index in range");
        if perturb_transition(model, t, strength, rng)? {
            changed += 1;
        }
    }
    Ok(changed)
}
