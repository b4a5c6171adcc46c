use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Mlp, Scaler};
use crate::world_model::{Transition, WorldModel};

/// Largest `‖f(x₁) − f(x₂)‖ / ‖x₁ − x₂‖` over `pairs` sampled pairs.
///
/// This is a lower estimate of the true Lipschitz constant. Coincident
/// pairs are skipped; an error is returned if every pair coincided.
pub fn estimate_lipschitz<R, F, S>(f: F, mut sampler: S, pairs: usize, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    S: FnMut(&mut R) -> Vec<f64>,
{
    if pairs == 0 {
        return Err(Error::Parameter("estimate_lipschitz needs pairs >= 1".into()));
    }
    let mut best: Option<f64> = None;
    for _ in 0..pairs {
        let x1 = sampler(rng);
        let x2 = sampler(rng);
        let dx = l2_dist(&x1, &x2);
        if dx == 0.0 {
            continue;
        }
        let dy = l2_dist(&f(&x1)?, &f(&x2)?);
        let ratio = dy / dx;
        if !ratio.is_finite() {
            return Err(Error::NonFinite("Lipschitz ratio".into()));
        }
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or_else(|| Error::Parameter("all sampled pairs coincided".into()))
}

pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Analytic upper bound: product of layer spectral norms times the
/// activation slope bound of every hidden layer.
pub fn mlp_lipschitz_upper(mlp: &Mlp, spectral_iters: usize) -> f64 {
    let slope = mlp.spec.activation.max_slope();
    let hidden = mlp.params.layers.len().saturating_sub(1);
    let norms: f64 = mlp
        .params
        .layers
        .iter()
        .map(|l| crate::nn::spectral_norm(&l.weight, spectral_iters))
        .product();
    norms * slope.powi(hidden as i32) * mlp.spec.output_activation.max_slope()
}

fn scaler_gain(s: &Scaler) -> f64 {
    s.scale.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Upper bound on the state Lipschitz constant of the model's mean
/// next-state map for a fixed action: identity skip plus the network
/// gain through the input scaling.
pub fn dynamics_lipschitz_upper(model: &WorldModel, spectral_iters: usize) -> f64 {
    1.0 + scaler_gain(model.input_scaler()) * mlp_lipschitz_upper(&model.dynamics, spectral_iters)
}

/// Mean over transitions of `‖s' − mean prediction‖₂`.
pub fn dynamics_consistency_error<'a>(model: &WorldModel, transitions: impl IntoIterator<Item = &'a Transition>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for t in transitions {
        let p = model.predict(&t.state, &t.action)?;
        total += l2_dist(&p.mean, &t.next_state);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Warmup("no transitions for consistency error".into()));
    }
    Ok(total / n as f64)
}
