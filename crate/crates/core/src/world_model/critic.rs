//! Lipschitz critic for the dual form of the exploration loss.
//!
//! Sample clouds are passed as one matrix per side with rows grouped by time
//! step (t-major): rows `t·g .. (t+1)·g` hold the `g` samples of step `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, spectral_norm_grad, top_singular, Activation, AdamConfig, Matrix, Mlp, MlpSpec, ParamBlock, ParamVars, Tape, Var};

pub const CRITIC_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub adam: AdamConfig,
    /// Weight of `Σ_layers (‖W‖₂ − 1)²` in the critic objective.
    pub penalty_weight: f64,
    pub spectral_iters: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            penalty_weight: 100.0,
            spectral_iters: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticReport {
    /// Exploration objective before the last ascent step.
    pub objective: f64,
    /// Spectral penalty (unweighted) before the last ascent step.
    pub penalty: f64,
    /// The critic diverged and was restored to its initial parameters.
    pub reset: bool,
}

/// `state_dim → 32 → 1` with LeakyReLU.
pub fn critic_spec(state_dim: usize) -> MlpSpec {
    MlpSpec::new(state_dim, vec![CRITIC_HIDDEN], 1, Activation::LeakyReLU)
}

fn groups(rows: usize, group: usize, what: &str) -> Result<usize> {
    if group == 0 || rows == 0 || rows % group != 0 {
        return Err(Error::shape(format!("{what} sample groups"), format!("positive multiple of {group}"), rows));
    }
    Ok(rows / group)
}

fn check_clouds(true_next: &Matrix, true_group: usize, pred_next: &Matrix, pred_group: usize) -> Result<usize> {
    let h = groups(true_next.rows(), true_group, "true")?;
    let hp = groups(pred_next.rows(), pred_group, "predicted")?;
    if h != hp {
        return Err(Error::shape("exploration loss horizon", h, hp));
    }
    Ok(h)
}

/// Records `Σ_t γ^t |mean_t f(true) − mean_t f(pred)|` on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn exploration_objective(
    tape: &mut Tape,
    critic: &Mlp,
    vars: &ParamVars,
    true_next: Var,
    true_group: usize,
    pred_next: Var,
    pred_group: usize,
    gamma: f64,
) -> Result<Var> {
    let h = check_clouds(tape.value(true_next), true_group, tape.value(pred_next), pred_group)?;
    let f_true = critic.forward_with(tape, true_next, vars)?;
    let f_pred = critic.forward_with(tape, pred_next, vars)?;
    let m_true = tape.group_mean_rows(f_true, true_group)?;
    let m_pred = tape.group_mean_rows(f_pred, pred_group)?;
    let diff = tape.sub(m_true, m_pred)?;
    let gaps = tape.abs(diff);
    let weights = Matrix::from_vec(h, 1, (0..h).map(|t| gamma.powi(t as i32)).collect())?;
    let w = tape.constant(weights);
    let weighted = tape.mul(gaps, w)?;
    Ok(tape.sum(weighted))
}

/// Unweighted per-step gaps `|mean_t f(true) − mean_t f(pred)|`.
pub fn exploration_terms(critic: &Mlp, true_next: &Matrix, true_group: usize, pred_next: &Matrix, pred_group: usize) -> Result<Vec<f64>> {
    let h = check_clouds(true_next, true_group, pred_next, pred_group)?;
    let f_true = critic.forward_batch(true_next)?;
    let f_pred = critic.forward_batch(pred_next)?;
    Ok((0..h)
        .map(|t| {
            let a = f_true.data()[t * true_group..(t + 1) * true_group].iter().sum::<f64>() / true_group as f64;
            let b = f_pred.data()[t * pred_group..(t + 1) * pred_group].iter().sum::<f64>() / pred_group as f64;
            (a - b).abs()
        })
        .collect())
}

pub fn exploration_value(critic: &Mlp, true_next: &Matrix, true_group: usize, pred_next: &Matrix, pred_group: usize, gamma: f64) -> Result<f64> {
    Ok(exploration_terms(critic, true_next, true_group, pred_next, pred_group)?
        .iter()
        .enumerate()
        .map(|(t, g)| gamma.powi(t as i32) * g)
        .sum())
}

/// `Σ_layers (‖W‖₂ − 1)²` and its gradient with respect to each weight.
pub fn spectral_penalty(block: &ParamBlock, iters: usize) -> (f64, Vec<Matrix>) {
    let mut total = 0.0;
    let grads = block
        .layers
        .iter()
        .map(|layer| {
            let top = top_singular(&layer.weight, iters);
            let gap = top.sigma - 1.0;
            total += gap * gap;
            let mut g = spectral_norm_grad(&top);
            g.data_mut().iter_mut().for_each(|v| *v *= 2.0 * gap);
            g
        })
        .collect();
    (total, grads)
}

/// Per-layer spectral norms.
pub fn layer_spectral_norms(block: &ParamBlock, iters: usize) -> Vec<f64> {
    block.layers.iter().map(|l| top_singular(&l.weight, iters).sigma).collect()
}

/// `steps` Adam ascent steps on the exploration objective minus the
/// weighted spectral penalty. Errors on non-finite values; the critic keeps
/// the parameters of the last successful step.
#[allow(clippy::too_many_arguments)]
pub fn critic_ascent(
    critic: &mut Mlp,
    true_next: &Matrix,
    true_group: usize,
    pred_next: &Matrix,
    pred_group: usize,
    gamma: f64,
    steps: usize,
    cfg: &CriticConfig,
) -> Result<CriticReport> {
    check_clouds(true_next, true_group, pred_next, pred_group)?;
    let mut report = CriticReport::default();
    for _ in 0..steps {
        let mut tape = Tape::new();
        let vars = critic.param_vars(&mut tape, true);
        let tn = tape.constant(true_next.clone());
        let pn = tape.constant(pred_next.clone());
        let obj = exploration_objective(&mut tape, critic, &vars, tn, true_group, pn, pred_group, gamma)?;
        let neg = tape.scale(obj, -1.0);
        let grads = tape.backward(neg)?;
        critic.params.zero_grad();
        critic.params.accumulate_grads(&grads, &vars)?;
        let (penalty, pgrads) = spectral_penalty(&critic.params, cfg.spectral_iters);
        for (g, pg) in critic.params.grads.iter_mut().zip(&pgrads) {
            g.weight.add_scaled(pg, cfg.penalty_weight);
        }
        report.objective = tape.scalar(obj);
        report.penalty = penalty;
        if !report.objective.is_finite() || !penalty.is_finite() {
            critic.params.zero_grad();
            return Err(Error::NonFinite("critic objective".into()));
        }
        adam_step(&mut critic.params, &cfg.adam)?;
    }
    Ok(report)
}
