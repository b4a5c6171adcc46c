//! Brute-force oracles and empirical checks of the exploration-loss bounds.

mod adversarial;
mod lipschitz;
mod report;
mod sandwich;
mod wasserstein;

use rand::Rng;

pub use adversarial::{adversarial_csv, adversarial_eval, AdversarialPoint, ADVERSARIAL_CSV_HEADER, DEFAULT_INJECTION_RATIO};
pub use lipschitz::{dynamics_consistency_error, dynamics_lipschitz_upper, estimate_lipschitz, mlp_lipschitz_upper};
pub use report::{Check, CheckStatus, DiagnosticReport};
pub use sandwich::{
    check_bound_sandwich, sandwich_suite, SandwichCase, SandwichConfig, SandwichOutcome, ASCENT_FLOOR, CRITIC_SLACK, SANDWICH_GAMMA,
    SANDWICH_HORIZONS,
};
pub use wasserstein::{kl_tv, transport_cost, wasserstein_1d, EmpiricalDist1D, KlTv};

use crate::error::Result;
use crate::nn::{Matrix, Mlp};
use crate::world_model::{critic_ascent, critic_spec, CriticConfig};

pub const MAX_ORACLE_SUPPORT: usize = 8;
pub const ORACLE_TOL: f64 = 1e-9;

fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> (EmpiricalDist1D, EmpiricalDist1D) {
    let n = rng.random_range(1..=MAX_ORACLE_SUPPORT);
    let m = rng.random_range(1..=MAX_ORACLE_SUPPORT);
    (EmpiricalDist1D::random(n, -5.0, 5.0, rng), EmpiricalDist1D::random(m, -5.0, 5.0, rng))
}

/// Quantile-coupling distance against the min-cost transport oracle, plus
/// metric axioms on random triples.
pub fn wasserstein_suite<R: Rng + ?Sized>(instances: usize, rng: &mut R) -> DiagnosticReport {
    let mut report = DiagnosticReport::new("wasserstein");
    let mut max_err = 0.0f64;
    for _ in 0..instances {
        let (p, q) = random_pair(rng);
        let err = (wasserstein_1d(&p, &q) - transport_cost(&p, &q, |a, b| (a - b).abs())).abs();
        max_err = max_err.max(err);
    }
    report.checks.push(Check::leq("oracle_equivalence_max_abs_err", max_err, 0.0, ORACLE_TOL));

    let (mut asym, mut tri, mut self_d) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances.max(1) {
        let (p, q) = random_pair(rng);
        let r = EmpiricalDist1D::random(rng.random_range(1..=MAX_ORACLE_SUPPORT), -5.0, 5.0, rng);
        asym = asym.max((wasserstein_1d(&p, &q) - wasserstein_1d(&q, &p)).abs());
        tri = tri.max(wasserstein_1d(&p, &r) - wasserstein_1d(&p, &q) - wasserstein_1d(&q, &r));
        self_d = self_d.max(wasserstein_1d(&p, &p));
    }
    report.checks.push(Check::leq("symmetry_max_abs_err", asym, 0.0, 0.0));
    report.checks.push(Check::leq("triangle_max_violation", tri, 0.0, ORACLE_TOL));
    report.checks.push(Check::leq("self_distance_max", self_d, 0.0, ORACLE_TOL));
    report
}

/// Trains spectrally penalized critics on random clouds and compares the
/// sampled Lipschitz estimate with the analytic bound and `band`.
pub fn lipschitz_suite<R: Rng + ?Sized>(critics: usize, steps: usize, band: f64, rng: &mut R) -> Result<DiagnosticReport> {
    let mut report = DiagnosticReport::new("lipschitz");
    let cfg = CriticConfig::default();
    for i in 0..critics {
        let dim = 1 + i % 3;
        let rows = 64;
        let shift: f64 = rng.random_range(0.5..2.0);
        let a: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
        let true_m = Matrix::from_vec(rows, dim, a)?;
        let pred_m = Matrix::from_vec(rows, dim, b)?;
        let mut critic = Mlp::new("critic", critic_spec(dim), rng)?;
        critic_ascent(&mut critic, &true_m, rows, &pred_m, rows, 1.0, steps, &cfg)?;
        let sampler = |r: &mut R| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let est = estimate_lipschitz(|x| critic.forward(x), sampler, 2000, rng)?;
        let upper = mlp_lipschitz_upper(&critic, 100);
        report.checks.push(Check::leq(format!("critic{i}/estimate_le_analytic"), est, upper, 1e-9));
        report.checks.push(Check::leq(format!("critic{i}/estimate_le_band"), est, band, 0.0));
    }
    Ok(report)
}
