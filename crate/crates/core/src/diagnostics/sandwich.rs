use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::lipschitz::estimate_lipschitz;
use super::report::{Check, CheckStatus, DiagnosticReport};
use super::wasserstein::{wasserstein_1d, EmpiricalDist1D};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Matrix, Mlp};
use crate::world_model::{critic_ascent, critic_spec, CriticConfig};

/// 1-D linear Gaussian kernel pair.
///
/// Environment: `s' = a·s + drift[t] + σ·ε`. Model: the same kernel with
/// the mean shifted by `delta[t]`. Both share `σ`, so the exact per-step
/// distance is `|delta[t]|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichCase {
    pub a: f64,
    pub sigma: f64,
    pub drift: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: f64,
}

impl SandwichCase {
    pub fn random<R: Rng + ?Sized>(horizon: usize, gamma: f64, rng: &mut R) -> Self {
        Self {
            a: rng.random_range(0.6..1.1),
            sigma: rng.random_range(0.1..0.5),
            drift: (0..horizon).map(|_| rng.random_range(-0.5..0.5)).collect(),
            delta: (0..horizon)
                .map(|_| {
                    let mag = rng.random_range(0.2..1.0);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect(),
            gamma,
        }
    }

    /// Model identical to the environment.
    pub fn exact(horizon: usize, gamma: f64) -> Self {
        Self {
            a: 0.9,
            sigma: 0.3,
            drift: vec![0.1; horizon],
            delta: vec![0.0; horizon],
            gamma,
        }
    }

    /// Constant mean shift.
    pub fn shifted(horizon: usize, gamma: f64, delta: f64) -> Self {
        Self {
            delta: vec![delta; horizon],
            ..Self::exact(horizon, gamma)
        }
    }

    pub fn horizon(&self) -> usize {
        self.delta.len()
    }

    fn validate(&self) -> Result<()> {
        if self.delta.is_empty() || self.drift.len() != self.delta.len() {
            return Err(Error::shape("sandwich case horizon", self.drift.len(), self.delta.len()));
        }
        if !(self.sigma > 0.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Parameter("sandwich case needs sigma > 0 and gamma in (0, 1]".into()));
        }
        Ok(())
    }

    fn true_mean(&self, s: f64, t: usize) -> f64 {
        self.a * s + self.drift[t]
    }

    fn model_mean(&self, s: f64, t: usize) -> f64 {
        self.true_mean(s, t) + self.delta[t]
    }

    /// Exact per-step distances `|delta[t]|`.
    pub fn step_distances(&self) -> Vec<f64> {
        self.delta.iter().map(|d| d.abs()).collect()
    }

    /// Mean gap of the `H`-step open-loop kernels from a common start.
    pub fn composed_gap(&self) -> f64 {
        let h = self.horizon();
        (0..h).map(|t| self.a.powi((h - 1 - t) as i32) * self.delta[t]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichConfig {
    /// True trajectories per case.
    pub batch: usize,
    pub n_model_samples: usize,
    pub critic_steps: usize,
    pub critic: CriticConfig,
    /// Independent model noise when false; shared with the environment
    /// draws when true.
    pub common_noise: bool,
    /// Start states mixed for the state-distribution checks.
    pub mixture_states: usize,
    pub draws_per_state: usize,
    pub lipschitz_pairs: usize,
}

impl Default for SandwichConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            n_model_samples: 4,
            critic_steps: 500,
            critic: CriticConfig {
                adam: AdamConfig::with_lr(1e-2),
                ..CriticConfig::default()
            },
            common_noise: false,
            mixture_states: 32,
            draws_per_state: 64,
            lipschitz_pairs: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichOutcome {
    pub case: SandwichCase,
    pub loss_ex: f64,
    pub standard_error: f64,
    /// Per-step critic gaps.
    pub terms: Vec<f64>,
    pub step_w: Vec<f64>,
    pub max_w: f64,
    pub discounted_w: f64,
    /// Distance between the next-state mixtures over sampled start states.
    pub mixture_w: Vec<f64>,
    /// Distance between the `H`-step composed kernels.
    pub composed_w: f64,
    /// Smaller of the two kernels' estimated state Lipschitz constants.
    pub lipschitz_bar: f64,
    pub composed_ratio: f64,
    pub critic_lipschitz: f64,
    pub checks: Vec<Check>,
}

impl SandwichOutcome {
    pub fn status(&self) -> CheckStatus {
        if self.checks.iter().any(|c| c.status == CheckStatus::Fail) {
            CheckStatus::Fail
        } else if self.checks.iter().any(|c| c.status == CheckStatus::Inconclusive) {
            CheckStatus::Inconclusive
        } else {
            CheckStatus::Pass
        }
    }
}

/// Relative slack granted to the lower-side checks for a finite-budget critic.
pub const CRITIC_SLACK: f64 = 0.05;
/// Below this fraction of the largest step distance the critic is deemed
/// not to have ascended.
pub const ASCENT_FLOOR: f64 = 0.5;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Trains a critic on sampled clouds of `case` and checks the upper and
/// lower bounds relating the exploration loss to the exact distances.
pub fn check_bound_sandwich<R: Rng + ?Sized>(case: &SandwichCase, cfg: &SandwichConfig, rng: &mut R) -> Result<SandwichOutcome> {
    case.validate()?;
    if cfg.batch < 2 || cfg.n_model_samples == 0 || cfg.mixture_states == 0 || cfg.draws_per_state == 0 {
        return Err(Error::Parameter("sandwich config needs batch >= 2 and positive sample counts".into()));
    }
    let h = case.horizon();
    let (b, n) = (cfg.batch, cfg.n_model_samples);

    // t-major clouds: true next states and model samples from the same s_t.
    let mut state: Vec<f64> = (0..b).map(|_| normal(rng)).collect();
    let mut true_next = Vec::with_capacity(h * b);
    let mut pred_next = Vec::with_capacity(h * b * n);
    for t in 0..h {
        let noise: Vec<f64> = (0..b).map(|_| normal(rng)).collect();
        for _ in 0..n {
            for (i, &s) in state.iter().enumerate() {
                let e = if cfg.common_noise { noise[i] } else { normal(rng) };
                pred_next.push(case.model_mean(s, t) + case.sigma * e);
            }
        }
        for (i, s) in state.iter_mut().enumerate() {
            *s = case.true_mean(*s, t) + case.sigma * noise[i];
        }
        true_next.extend_from_slice(&state);
    }
    let true_m = Matrix::from_vec(h * b, 1, true_next)?;
    let pred_m = Matrix::from_vec(h * b * n, 1, pred_next)?;

    let mut critic = Mlp::new("critic", critic_spec(1), rng)?;
    critic_ascent(&mut critic, &true_m, b, &pred_m, b * n, case.gamma, cfg.critic_steps, &cfg.critic)?;

    let f_true = critic.forward_batch(&true_m)?;
    let f_pred = critic.forward_batch(&pred_m)?;
    let mut terms = Vec::with_capacity(h);
    let mut var_sum = 0.0;
    for t in 0..h {
        let (mt, vt) = mean_var(&f_true.data()[t * b..(t + 1) * b]);
        let (mp, vp) = mean_var(&f_pred.data()[t * b * n..(t + 1) * b * n]);
        terms.push((mt - mp).abs());
        var_sum += case.gamma.powi(2 * t as i32) * (vt / b as f64 + vp / (b * n) as f64);
    }
    let loss_ex: f64 = terms.iter().enumerate().map(|(t, g)| case.gamma.powi(t as i32) * g).sum();
    let se = var_sum.sqrt();

    let step_w = case.step_distances();
    let max_w = step_w.iter().cloned().fold(0.0, f64::max);
    let discounted_w: f64 = step_w.iter().enumerate().map(|(t, w)| case.gamma.powi(t as i32) * w).sum();

    // State-distribution checks with shared draws, so the sampled distance
    // is exact for this shift family.
    let starts: Vec<f64> = (0..cfg.mixture_states).map(|_| normal(rng)).collect();
    let mut mixture_w = Vec::with_capacity(h);
    let mut mix_states = starts.clone();
    for t in 0..h {
        let mut p = Vec::with_capacity(starts.len() * cfg.draws_per_state);
        let mut q = Vec::with_capacity(p.capacity());
        for &s in &mix_states {
            for _ in 0..cfg.draws_per_state {
                let e = case.sigma * normal(rng);
                p.push(case.true_mean(s, t) + e);
                q.push(case.model_mean(s, t) + e);
            }
        }
        mixture_w.push(wasserstein_1d(&EmpiricalDist1D::from_samples(&p)?, &EmpiricalDist1D::from_samples(&q)?));
        for s in mix_states.iter_mut() {
            *s = case.true_mean(*s, t) + case.sigma * normal(rng);
        }
    }

    let mut p_h = Vec::new();
    let mut q_h = Vec::new();
    for &s0 in &starts {
        for _ in 0..cfg.draws_per_state {
            let (mut s, mut sh) = (s0, s0);
            for t in 0..h {
                let e = case.sigma * normal(rng);
                s = case.true_mean(s, t) + e;
                sh = case.model_mean(sh, t) + e;
            }
            p_h.push(s);
            q_h.push(sh);
        }
    }
    let composed_w = wasserstein_1d(&EmpiricalDist1D::from_samples(&p_h)?, &EmpiricalDist1D::from_samples(&q_h)?);
    let sampler = |r: &mut R| vec![r.random_range(-3.0..3.0)];
    let l_true = estimate_lipschitz(|x| Ok(vec![case.true_mean(x[0], 0)]), sampler, cfg.lipschitz_pairs, rng)?;
    let l_model = estimate_lipschitz(|x| Ok(vec![case.model_mean(x[0], 0)]), sampler, cfg.lipschitz_pairs, rng)?;
    let lipschitz_bar = l_true.min(l_model);
    let denom: f64 = (0..h).map(|i| lipschitz_bar.powi(i as i32)).sum();
    let composed_ratio = composed_w / denom;
    let critic_lipschitz = estimate_lipschitz(|x| critic.forward(x), sampler, cfg.lipschitz_pairs, rng)?;

    let slack = 3.0 * se;
    let lower = 1.0 - CRITIC_SLACK;
    let mut lower_checks = vec![
        Check::leq("lower_bound_max_step", lower * max_w, loss_ex, slack),
        Check::leq(
            "lower_bound_state_mixture",
            lower * mixture_w.iter().cloned().fold(0.0, f64::max),
            loss_ex,
            slack,
        ),
        Check::leq("lower_bound_composed", lower * composed_ratio, loss_ex, slack),
    ];
    if loss_ex < ASCENT_FLOOR * max_w {
        lower_checks = lower_checks
            .into_iter()
            .map(|c| if c.status == CheckStatus::Fail { c.inconclusive() } else { c })
            .collect();
    }
    let mut checks = vec![Check::leq("upper_bound_discounted_sum", loss_ex, discounted_w, slack)];
    checks.extend(lower_checks);

    Ok(SandwichOutcome {
        case: case.clone(),
        loss_ex,
        standard_error: se,
        terms,
        step_w,
        max_w,
        discounted_w,
        mixture_w,
        composed_w,
        lipschitz_bar,
        composed_ratio,
        critic_lipschitz,
        checks,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

pub const SANDWICH_HORIZONS: [usize; 3] = [2, 3, 5];
pub const SANDWICH_GAMMA: f64 = 0.9;

/// `cases` randomized kernels cycling through [`SANDWICH_HORIZONS`].
pub fn sandwich_suite<R: Rng + ?Sized>(cases: usize, cfg: &SandwichConfig, rng: &mut R) -> Result<(DiagnosticReport, Vec<SandwichOutcome>)> {
    let mut report = DiagnosticReport::new("sandwich");
    let mut outcomes = Vec::with_capacity(cases);
    for i in 0..cases {
        let case = SandwichCase::random(SANDWICH_HORIZONS[i % SANDWICH_HORIZONS.len()], SANDWICH_GAMMA, rng);
        let out = check_bound_sandwich(&case, cfg, rng)?;
        for c in &out.checks {
            let mut c = c.clone();
            c.name = format!("case{i}/{}", c.name);
            report.checks.push(c);
        }
        outcomes.push(out);
    }
    report.details = Some(serde_json::to_value(&outcomes).map_err(|e| Error::Parameter(e.to_string()))?);
    Ok((report, outcomes))
}
