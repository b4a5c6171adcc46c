mod common;

use common::{FdStats, GRADIENT_CASES};

const INSTANCES: u64 = 5;

fn run(name: &str) -> FdStats {
    let (_, case) = GRADIENT_CASES.iter().find(|(n, _)| *n == name).unwrap();
    let mut total = FdStats::default();
    for i in 0..INSTANCES {
        let s = case(i);
        assert!(s.passed(), "{name} instance {i}: {s:?}");
        total.merge(&s);
    }
    total
}

#[test]
fn dynamics_l2_loss_matches_finite_differences() {
    run("loss_org_dyn");
}

#[test]
fn exploration_loss_dynamics_gradient_matches_finite_differences() {
    run("loss_ex_dynamics");
}

#[test]
fn exploration_loss_critic_gradient_matches_finite_differences() {
    run("loss_ex_critic");
}

#[test]
fn smoothing_loss_matches_finite_differences() {
    let s = run("loss_smt");
    assert!(s.retried * 50 <= s.checked, "too many kinked coordinates: {s:?}");
}

#[test]
fn reward_loss_matches_finite_differences() {
    run("loss_org_rew");
}

#[test]
fn elite_log_likelihood_matches_finite_differences() {
    run("elite_log_likelihood");
}
