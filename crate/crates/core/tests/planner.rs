mod common;

use common::{jitter, mi_bound_case, random_model, rng, spec_of, MiToy};
use flexplore::envs::{EnvId, EnvSpec, HybridAction};
use flexplore::nn::{AdamConfig, Matrix, LN_2PI};
use flexplore::planner::{aux_reward, elite_indices, CandidateTrajectory, Planner, PlannerConfig};
use flexplore::world_model::{ModelDims, WorldModel, WorldModelConfig};

fn planner_with(spec: &EnvSpec, cfg: PlannerConfig, seed: u64) -> Planner {
    Planner::new(spec, cfg, &mut rng(seed)).unwrap()
}

/// Makes both heads state independent: fixed logits, fixed raw `μ` and
/// `log σ` for every coordinate.
fn pin_heads(p: &mut Planner, logits: &[f64], mu_raw: f64, log_sigma: f64) {
    let last = p.pi_beta.params.layers.last_mut().unwrap();
    last.weight.fill(0.0);
    last.bias.data_mut().copy_from_slice(logits);
    let last = p.p_theta.params.layers.last_mut().unwrap();
    last.weight.fill(0.0);
    let b = last.bias.data_mut();
    let half = b.len() / 2;
    b[..half].iter_mut().for_each(|v| *v = mu_raw);
    b[half..].iter_mut().for_each(|v| *v = log_sigma);
}

/// Dynamics predicting `s + delta` with the initial log-variance.
fn pin_dynamics(model: &mut WorldModel, delta: &[f64]) {
    let sd = model.dims.state_dim;
    let last = model.dynamics.params.layers.last_mut().unwrap();
    last.weight.fill(0.0);
    last.bias.data_mut()[..sd].copy_from_slice(delta);
}

/// Reward equal to `1[k = winner]` for any state and parameters.
fn indicator_reward(model: &mut WorldModel, winner: usize) {
    let column = model.dims.state_dim + winner;
    for (i, layer) in model.reward.params.layers.iter_mut().enumerate() {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
        layer.weight.set(0, if i == 0 { column } else { 0 }, 1.0);
    }
}

fn model_for(spec: &EnvSpec, init_log_var: f64) -> WorldModel {
    let cfg = WorldModelConfig {
        init_log_var,
        ..WorldModelConfig::default()
    };
    WorldModel::new(ModelDims::of(spec), cfg, &mut rng(2)).unwrap()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_normal(x: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        total += -0.5 * (log_var[i] + LN_2PI + (x[i] - mean[i]).powi(2) / log_var[i].exp());
    }
    total
}

#[test]
fn dominant_logit_wins_at_low_temperature() {
    let spec = spec_of(EnvId::HardMove(3));
    let mut p = planner_with(&spec, PlannerConfig::default(), 1);
    let mut logits = vec![0.0; 8];
    logits[5] = 10.0;
    pin_heads(&mut p, &logits, 0.0, 0.0);
    p.temperature = 0.01;
    let mut r = rng(2);
    let s = vec![0.0; spec.state_dim];
    let hits = (0..1000).filter(|_| p.sample_hybrid(&s, &mut r).unwrap().action.k == 5).count();
    assert!(hits >= 990, "{hits}/1000");
}

#[test]
fn sigma_floor_keeps_draws_near_the_mean() {
    let spec = spec_of(EnvId::HardMove(2));
    let mut p = planner_with(&spec, PlannerConfig::default(), 3);
    pin_heads(&mut p, &[0.0; 4], 0.4, -50.0);
    let mu = 0.4f64.tanh();
    let mut r = rng(4);
    let s = vec![0.0; spec.state_dim];
    let mut near = 0;
    let draws = 2000;
    for _ in 0..draws {
        let sample = p.sample_hybrid(&s, &mut r).unwrap();
        near += sample.z_raw.iter().filter(|z| (*z - mu).abs() <= 0.01).count();
    }
    assert!(near as f64 >= 0.997 * (2 * draws) as f64, "{near}");
}

#[test]
fn parameterless_action_has_empty_z() {
    let spec = spec_of(EnvId::CatchPoint);
    let mut p = planner_with(&spec, PlannerConfig::default(), 5);
    pin_heads(&mut p, &[-20.0, 20.0], 0.0, 0.0);
    p.temperature = 0.01;
    let s = vec![0.0; spec.state_dim];
    let sample = p.sample_hybrid(&s, &mut rng(6)).unwrap();
    assert_eq!(sample.action.k, 1);
    assert!(sample.action.z.is_empty() && sample.z_raw.is_empty());
    assert_eq!(sample.log_pz, 0.0);
}

#[test]
fn aux_reward_at_both_modes() {
    let spec = spec_of(EnvId::HardMove(4));
    let mut model = model_for(&spec, 0.0);
    pin_dynamics(&mut model, &[0.0; 6]);
    let mut p = planner_with(&spec, PlannerConfig::default(), 7);
    pin_heads(&mut p, &[0.0; 16], 0.0, 0.0);
    let s = vec![0.3, -0.2, 0.5, 0.1, 0.4, 2.0];
    let a = HybridAction::new(9, vec![0.0; 4]);
    let got = aux_reward(&model, &p, &s, &a, &s).unwrap();
    let expected = 0.5 * (4.0 - 6.0) * LN_2PI;
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn aux_reward_grows_with_sigma() {
    let spec = spec_of(EnvId::HardMove(2));
    let model = random_model(&spec, WorldModelConfig::default(), &mut rng(8));
    let s = vec![0.1, 0.2, -0.3, 0.4, 0.5, 3.0];
    let next = vec![0.2, 0.1, -0.3, 0.4, 0.4, 4.0];
    let a = HybridAction::new(2, vec![0.25f64.tanh(), 0.25f64.tanh()]);
    let mut last = f64::NEG_INFINITY;
    for log_sigma in [-6.0, -3.0, -1.0, 0.0, 0.5] {
        let mut p = planner_with(&spec, PlannerConfig::default(), 9);
        pin_heads(&mut p, &[0.0; 4], 0.25, log_sigma);
        let aux = aux_reward(&model, &p, &s, &a, &next).unwrap();
        assert!(aux > last, "log sigma {log_sigma}: {aux} <= {last}");
        last = aux;
    }
}

#[test]
fn aux_reward_stays_below_mutual_information_on_toys() {
    let mut r = rng(11);
    for i in 0..5 {
        let toy = MiToy::random(&mut r);
        let out = mi_bound_case(&toy, 4000, 1500, 100 + i);
        assert!(out.holds(), "toy {i} {toy:?}: {out:?}");
    }
}

#[test]
fn single_step_candidates_match_hand_computation() {
    let spec = spec_of(EnvId::HardMove(2));
    let delta = [0.1, -0.05, 0.0, 0.0, -0.02, 1.0];
    let mut model = model_for(&spec, -1.0);
    jitter(&mut model.reward.params, 0.2, &mut rng(12));
    pin_dynamics(&mut model, &delta);
    let cfg = PlannerConfig {
        horizon: 1,
        n_candidates: 16,
        eta: 0.01,
        ..PlannerConfig::default()
    };
    let mut p = planner_with(&spec, cfg, 13);
    jitter(&mut p.p_theta.params, 0.3, &mut rng(14));
    let s0 = vec![0.2, 0.4, -0.6, 0.1, 0.8, 0.0];
    let cands = p.rollout_candidates(&model, &s0, &mut rng(15)).unwrap();
    for c in &cands {
        let a = &c.actions[0];
        let mean: Vec<f64> = s0.iter().zip(&delta).map(|(s, d)| s + d).collect();
        let lv = model.predict(&s0, a).unwrap().log_var;
        let raw = model.predict_reward(&s0, a).unwrap();
        let aux = log_normal(&c.states[1], &mean, &lv) - p.log_pz(&s0, a.k, &c.z_raw[0]).unwrap();
        assert!((c.raw_return - raw).abs() < 1e-9);
        assert!((c.aux_return - aux).abs() < 1e-9);
        assert!((c.total_return - (raw + 0.01 * aux)).abs() < 1e-9);
    }
}

#[test]
fn total_return_is_additive_and_eta_zero_drops_aux() {
    let spec = spec_of(EnvId::Platform);
    let model = random_model(&spec, WorldModelConfig::default(), &mut rng(16));
    let s0 = common::uniform_state(&spec, &mut rng(17));
    for eta in [0.0, 0.01, 0.5] {
        let cfg = PlannerConfig {
            eta,
            horizon: 4,
            ..PlannerConfig::default()
        };
        let p = planner_with(&spec, cfg, 18);
        for c in p.rollout_candidates(&model, &s0, &mut rng(19)).unwrap() {
            assert!((c.total_return - (c.raw_return + eta * c.aux_return)).abs() < 1e-9);
            if eta == 0.0 {
                assert_eq!(c.total_return, c.raw_return);
            }
        }
    }
}

fn manual_candidates(spec: &EnvSpec, count: usize, k: usize, z: impl Fn(usize) -> Vec<f64>, s0: &[f64]) -> Vec<CandidateTrajectory> {
    let mut r = rng(20);
    (0..count)
        .map(|i| {
            let zr = z(i);
            CandidateTrajectory {
                actions: vec![HybridAction::new(k, zr.clone())],
                z_raw: vec![zr],
                states: vec![s0.to_vec(), common::uniform_state(spec, &mut r)],
                raw_return: i as f64,
                aux_return: 0.0,
                total_return: i as f64,
            }
        })
        .collect()
}

#[test]
fn identical_candidates_keep_the_lowest_indices() {
    let spec = spec_of(EnvId::HardMove(2));
    let s0 = vec![0.0; spec.state_dim];
    let mut cands = manual_candidates(&spec, 20, 1, |_| vec![0.0, 0.0], &s0);
    for c in &mut cands {
        c.total_return = 3.0;
    }
    assert_eq!(elite_indices(&cands, 6), vec![0, 1, 2, 3, 4, 5]);
}

#[test]
fn elite_update_raises_the_probability_of_the_shared_action() {
    let spec = spec_of(EnvId::HardMove(2));
    for seed in 0..10 {
        let mut p = planner_with(&spec, PlannerConfig::default(), 30 + seed);
        let s0 = common::uniform_state(&spec, &mut rng(40 + seed));
        let prob = |p: &Planner| softmax(p.logits_batch(&Matrix::row_vector(&s0)).unwrap().row(0))[3];
        let before = prob(&p);
        let cands = manual_candidates(&spec, 12, 3, |i| vec![0.1 * i as f64 - 0.5, 0.3], &s0);
        p.elite_update(&cands).unwrap();
        assert!(prob(&p) > before, "seed {seed}");
    }
}

#[test]
fn elite_update_moves_mu_toward_the_elite_parameters() {
    let spec = spec_of(EnvId::HardMove(2));
    let c = [0.6, -0.7];
    for seed in 0..10 {
        let mut p = planner_with(&spec, PlannerConfig::default(), 50 + seed);
        let s0 = common::uniform_state(&spec, &mut rng(60 + seed));
        let mu = |p: &Planner| p.gaussian_batch(&Matrix::row_vector(&s0), &[2]).unwrap().0.row(0).to_vec();
        let before = mu(&p);
        let cands = manual_candidates(&spec, 12, 2, |_| c.to_vec(), &s0);
        p.elite_update(&cands).unwrap();
        let after = mu(&p);
        for i in 0..2 {
            assert!((after[i] - c[i]).abs() < (before[i] - c[i]).abs(), "seed {seed} coord {i}");
        }
    }
}

fn indicator_setup(winner: usize) -> (EnvSpec, WorldModel) {
    let spec = spec_of(EnvId::HardMove(3));
    let mut model = model_for(&spec, -6.0);
    pin_dynamics(&mut model, &[0.0; 6]);
    indicator_reward(&mut model, winner);
    (spec, model)
}

#[test]
fn indicator_reward_model_is_exact() {
    let (spec, model) = indicator_setup(5);
    let mut r = rng(70);
    for _ in 0..50 {
        let a = spec.random_action(&mut r);
        let s = common::uniform_state(&spec, &mut r);
        assert_eq!(model.predict_reward(&s, &a).unwrap(), if a.k == 5 { 1.0 } else { 0.0 });
    }
}

#[test]
fn planning_recovers_the_rewarding_action() {
    let (spec, model) = indicator_setup(5);
    let cfg = PlannerConfig {
        n_candidates: 64,
        iters: 6,
        horizon: 3,
        eta: 0.0,
        ..PlannerConfig::default()
    };
    let s0 = vec![0.0, 0.0, 1.0, 1.0, 2f64.sqrt(), 0.0];
    let hits = (0..50)
        .filter(|&t| {
            let mut p = planner_with(&spec, cfg.clone(), 100 + t);
            p.plan(&model, &s0, &mut rng(200 + t)).unwrap().k == 5
        })
        .count();
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn second_round_improves_on_a_bandit() {
    let spec = spec_of(EnvId::HardMove(2));
    let mut model = model_for(&spec, -6.0);
    pin_dynamics(&mut model, &[0.0; 6]);
    jitter(&mut model.reward.params, 0.5, &mut rng(80));
    let cfg = PlannerConfig {
        iters: 2,
        horizon: 1,
        eta: 0.0,
        adam: AdamConfig::with_lr(0.05),
        ..PlannerConfig::default()
    };
    let s0 = vec![0.0; spec.state_dim];
    let improved = (0..100)
        .filter(|&seed| {
            let mut p = planner_with(&spec, cfg.clone(), 300 + seed);
            let (_, trace) = p.plan_traced(&model, &s0, &mut rng(400 + seed)).unwrap();
            trace[1].best_total_return >= trace[0].best_total_return
        })
        .count();
    assert!(improved >= 80, "{improved}/100");
}

#[test]
fn shifting_all_rewards_keeps_the_elite_set() {
    let spec = spec_of(EnvId::Platform);
    let cfg = PlannerConfig {
        horizon: 5,
        ..PlannerConfig::default()
    };
    for seed in 0..10 {
        let model = random_model(&spec, WorldModelConfig::default(), &mut rng(500 + seed));
        let mut shifted = model.clone();
        shifted.reward.params.layers.last_mut().unwrap().bias.data_mut()[0] += 3.5;
        let p = planner_with(&spec, cfg.clone(), 600 + seed);
        let s0 = common::uniform_state(&spec, &mut rng(700 + seed));
        let sorted = |m: &WorldModel| {
            let mut e = elite_indices(&p.rollout_candidates(m, &s0, &mut rng(seed)).unwrap(), 6);
            e.sort_unstable();
            e
        };
        assert_eq!(sorted(&model), sorted(&shifted));
    }
}

#[test]
fn planning_is_deterministic_given_the_seed() {
    let spec = spec_of(EnvId::CatchPoint);
    let model = random_model(&spec, WorldModelConfig::default(), &mut rng(90));
    let p = planner_with(&spec, PlannerConfig::default(), 91);
    let s0 = common::uniform_state(&spec, &mut rng(92));
    let run = || {
        let mut q = p.clone();
        let (a, trace) = q.plan_traced(&model, &s0, &mut rng(93)).unwrap();
        (a, trace, q)
    };
    let (a1, t1, q1) = run();
    let (a2, t2, q2) = run();
    assert_eq!(a1, a2);
    assert_eq!(t1, t2);
    assert_eq!(q1, q2);
    assert_ne!(q1, p);
}

#[test]
fn one_candidate_one_round_returns_its_first_action() {
    let spec = spec_of(EnvId::HardMove(2));
    let model = random_model(&spec, WorldModelConfig::default(), &mut rng(94));
    let cfg = PlannerConfig {
        n_candidates: 1,
        n_elite: 1,
        iters: 1,
        ..PlannerConfig::default()
    };
    let s0 = vec![0.0; spec.state_dim];
    let p = planner_with(&spec, cfg, 95);
    let expected = p.rollout_candidates(&model, &s0, &mut rng(96)).unwrap().remove(0).actions.remove(0);
    let mut q = p.clone();
    assert_eq!(q.plan(&model, &s0, &mut rng(96)).unwrap(), expected);
}
