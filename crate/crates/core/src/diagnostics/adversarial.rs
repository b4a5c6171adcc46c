use serde::Serialize;

use crate::error::{Error, Result};
use crate::trainer::{train, AdversarialInjection, TrainConfig};

/// Fraction of pushed transitions perturbed when the config sets none.
pub const DEFAULT_INJECTION_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversarialPoint {
    pub strength: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub injected: usize,
}

/// One training run per strength; evaluation runs without injection.
pub fn adversarial_eval(cfg: &TrainConfig, strengths: &[f64]) -> Result<Vec<AdversarialPoint>> {
    let ratio = cfg.adversarial.map_or(DEFAULT_INJECTION_RATIO, |a| a.ratio);
    strengths
        .iter()
        .map(|&strength| {
            if !(strength >= 0.0 && strength.is_finite()) {
                return Err(Error::Parameter(format!("strength must be >= 0, got {strength}")));
            }
            let mut run = cfg.clone();
            run.adversarial = Some(AdversarialInjection { ratio, strength });
            let out = train(&run, None)?;
            Ok(AdversarialPoint {
                strength,
                eval_mean: out.eval.mean,
                eval_std: out.eval.std,
                injected: out.injected,
            })
        })
        .collect()
}

pub const ADVERSARIAL_CSV_HEADER: &str = "strength,eval_mean,eval_std,injected";

pub fn adversarial_csv(points: &[AdversarialPoint]) -> String {
    let mut s = String::from(ADVERSARIAL_CSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!("{},{},{},{}\n", p.strength, p.eval_mean, p.eval_std, p.injected));
    }
    s
}
