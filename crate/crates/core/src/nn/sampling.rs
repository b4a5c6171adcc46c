//! Reparameterized sampling primitives.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::softmax_in_place;
use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Standard Gumbel draw `-ln(-ln U)`.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -(-u.ln()).ln()
}

/// Relaxed one-hot sample `softmax((logits + g) / temperature)`.
pub fn gumbel_softmax<R: Rng + ?Sized>(logits: &[f64], temperature: f64, rng: &mut R) -> Result<Vec<f64>> {
    let noise: Vec<f64> = logits.iter().map(|_| gumbel_noise(rng)).collect();
    gumbel_softmax_with_noise(logits, &noise, temperature)
}

/// Deterministic part of [`gumbel_softmax`] for a given noise draw.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Parameter(format!("Gumbel-Softmax temperature must be > 0, got {temperature}")));
    }
    if logits.is_empty() {
        return Err(Error::Parameter("Gumbel-Softmax needs at least one logit".into()));
    }
    let mut y: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    softmax_in_place(&mut y);
    Ok(y)
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(z: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    z.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((z, m), s)| -s.ln() - 0.5 * LN_2PI - (z - m).powi(2) / (2.0 * s * s))
        .sum()
}

/// `z = mu + sigma ⊙ ε` with `ε ~ N(0, I)`, together with `log N(z; mu, sigma²)`.
pub fn gaussian_sample_logprob<R: Rng + ?Sized>(mu: &[f64], sigma: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
    if mu.len() != sigma.len() {
        return Err(Error::shape("gaussian_sample_logprob", mu.len(), sigma.len()));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Parameter(format!("sigma entries must be > 0, got {s}")));
    }
    let z: Vec<f64> = mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| {
            let e: f64 = rng.sample(StandardNormal);
            m + s * e
        })
        .collect();
    let logp = gaussian_log_prob(&z, mu, sigma);
    Ok((z, logp))
}
