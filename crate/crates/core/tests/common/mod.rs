//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use flexplore::diagnostics::EmpiricalDist1D;
use flexplore::envs::{Env, EnvId, EnvSpec, HybridAction};
use flexplore::nn::{adam_step, Activation, AdamConfig, Matrix, Mlp, ParamBlock, Tape};
use flexplore::planner::{Planner, PlannerConfig};
use flexplore::world_model::{exploration_objective, exploration_value, Segment, Transition, WorldModel, WorldModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn spec_of(id: EnvId) -> EnvSpec {
    Env::new(id).unwrap().spec().clone()
}

/// Adds `N(0, scale²)` noise to every parameter.
pub fn jitter<R: Rng + ?Sized>(block: &mut ParamBlock, scale: f64, rng: &mut R) {
    for i in 0..block.num_params() {
        let v = block.param(i) + scale * normal(rng);
        block.set_param(i, v);
    }
}

pub fn uniform_state<R: Rng + ?Sized>(spec: &EnvSpec, rng: &mut R) -> Vec<f64> {
    spec.state_low
        .iter()
        .zip(&spec.state_high)
        .map(|(&lo, &hi)| rng.random_range(lo..=hi))
        .collect()
}

/// Chained segments with uniformly random states, actions and rewards.
pub fn random_batch<R: Rng + ?Sized>(spec: &EnvSpec, b: usize, h: usize, gamma: f64, rng: &mut R) -> Vec<Segment> {
    (0..b)
        .map(|_| {
            let mut s = uniform_state(spec, rng);
            let mut records = Vec::with_capacity(h);
            for _ in 0..h {
                let next = uniform_state(spec, rng);
                records.push(Transition {
                    state: s,
                    action: spec.random_action(rng),
                    reward: normal(rng),
                    next_state: next.clone(),
                    done: false,
                });
                s = next;
            }
            Segment::new(records, gamma).unwrap()
        })
        .collect()
}

/// A model with every block perturbed away from its initialization.
pub fn random_model<R: Rng + ?Sized>(spec: &EnvSpec, cfg: WorldModelConfig, rng: &mut R) -> WorldModel {
    let mut m = WorldModel::for_env(spec, cfg, rng).unwrap();
    jitter(&mut m.dynamics.params, 0.2, rng);
    jitter(&mut m.reward.params, 0.2, rng);
    jitter(&mut m.critic.params, 0.2, rng);
    m
}

// ---------------------------------------------------------------------------
// Finite differences

pub const FD_STEP: f64 = 1e-5;
pub const FD_RETRY_STEP: f64 = 1e-6;
pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_TOL: f64 = 1e-8;
const MAX_CHECKED: usize = 300;

#[derive(Clone, Debug, Default)]
pub struct FdStats {
    pub checked: usize,
    /// Coordinates that only agreed at the smaller step (a kink within the
    /// larger one).
    pub retried: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

impl FdStats {
    pub fn merge(&mut self, other: &FdStats) {
        self.checked += other.checked;
        self.retried += other.retried;
        self.failures += other.failures;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }
}

pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= GRAD_REL_TOL * analytic.abs().max(numeric.abs()) + GRAD_ABS_TOL
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale <= GRAD_ABS_TOL {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Compares `analytic` (indexed like `block`) against central differences
/// of `eval` over a random subset of coordinates.
pub fn fd_check_block<R: Rng + ?Sized>(
    block: &ParamBlock,
    analytic: &[f64],
    rng: &mut R,
    mut eval: impl FnMut(&ParamBlock) -> f64,
) -> FdStats {
    let n = block.num_params();
    assert_eq!(analytic.len(), n);
    let indices: Vec<usize> = if n <= MAX_CHECKED {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, MAX_CHECKED).into_vec()
    };
    let mut stats = FdStats::default();
    let mut central = |idx: usize, h: f64| {
        let mut b = block.clone();
        let x = block.param(idx);
        b.set_param(idx, x + h);
        let fp = eval(&b);
        b.set_param(idx, x - h);
        let fm = eval(&b);
        (fp - fm) / (2.0 * h)
    };
    for idx in indices {
        stats.checked += 1;
        let a = analytic[idx];
        let numeric = central(idx, FD_STEP);
        if grad_close(a, numeric) {
            stats.max_rel_err = stats.max_rel_err.max(rel_err(a, numeric));
            continue;
        }
        let retry = central(idx, FD_RETRY_STEP);
        if grad_close(a, retry) {
            stats.retried += 1;
            stats.max_rel_err = stats.max_rel_err.max(rel_err(a, retry));
        } else {
            stats.failures += 1;
            stats.max_rel_err = stats.max_rel_err.max(rel_err(a, numeric).min(rel_err(a, retry)));
        }
    }
    stats
}

fn grads_of(block: &ParamBlock) -> Vec<f64> {
    (0..block.num_params()).map(|i| block.grad(i)).collect()
}

const GRAD_ENVS: [EnvId; 3] = [EnvId::Platform, EnvId::CatchPoint, EnvId::HardMove(4)];
const GRAD_GAMMA: f64 = 0.9;

fn grad_setup(instance: u64) -> (EnvSpec, WorldModel, Vec<Segment>, ChaCha8Rng) {
    let mut r = rng(1000 + instance);
    let spec = spec_of(GRAD_ENVS[instance as usize % GRAD_ENVS.len()]);
    let model = random_model(&spec, WorldModelConfig::default(), &mut r);
    let batch = random_batch(&spec, 3, 3, GRAD_GAMMA, &mut r);
    (spec, model, batch, r)
}

pub fn grad_org_dyn(instance: u64) -> FdStats {
    let (_, model, batch, mut r) = grad_setup(instance);
    let mut tape = Tape::new();
    let vars = model.dynamics.param_vars(&mut tape, true);
    let loss = model.org_dyn_on_tape(&mut tape, &vars, &batch).unwrap();
    let g = tape.backward(loss).unwrap();
    let mut block = model.dynamics.params.clone();
    block.zero_grad();
    block.accumulate_grads(&g, &vars).unwrap();
    fd_check_block(&model.dynamics.params, &grads_of(&block), &mut r, |b| {
        let mut m = model.clone();
        m.dynamics.params = b.clone();
        m.loss_org_dyn(&batch).unwrap()
    })
}

pub fn grad_ex_dynamics(instance: u64) -> FdStats {
    let (_, model, batch, mut r) = grad_setup(instance);
    let noise_seed = 77 + instance;
    let n = model.cfg.n_model_samples;
    let mut tape = Tape::new();
    let vars = model.dynamics.param_vars(&mut tape, true);
    let loss = model.ex_on_tape(&mut tape, &vars, &batch, n, &mut rng(noise_seed)).unwrap();
    let g = tape.backward(loss).unwrap();
    let mut block = model.dynamics.params.clone();
    block.zero_grad();
    block.accumulate_grads(&g, &vars).unwrap();
    fd_check_block(&model.dynamics.params, &grads_of(&block), &mut r, |b| {
        let mut m = model.clone();
        m.dynamics.params = b.clone();
        m.loss_ex(&batch, n, &mut rng(noise_seed)).unwrap()
    })
}

/// Time-major true and sampled predicted next-state clouds for `batch`.
pub fn exploration_clouds<R: Rng + ?Sized>(model: &WorldModel, batch: &[Segment], n: usize, rng: &mut R) -> (Matrix, Matrix) {
    let h = batch[0].len();
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for t in 0..h {
        for seg in batch {
            truth.push(seg.records[t].next_state.clone());
        }
        for _ in 0..n {
            for seg in batch {
                let rec = &seg.records[t];
                pred.push(model.predict_sampled(&rec.state, &rec.action, rng).unwrap().sample);
            }
        }
    }
    (Matrix::from_rows(&truth).unwrap(), Matrix::from_rows(&pred).unwrap())
}

pub fn grad_ex_critic(instance: u64) -> FdStats {
    let (_, model, batch, mut r) = grad_setup(instance);
    let b = batch.len();
    let n = model.cfg.n_model_samples;
    let (truth, pred) = exploration_clouds(&model, &batch, n, &mut r);
    let mut tape = Tape::new();
    let vars = model.critic.param_vars(&mut tape, true);
    let tv = tape.constant(truth.clone());
    let pv = tape.constant(pred.clone());
    let obj = exploration_objective(&mut tape, &model.critic, &vars, tv, b, pv, b * n, GRAD_GAMMA).unwrap();
    let g = tape.backward(obj).unwrap();
    let mut block = model.critic.params.clone();
    block.zero_grad();
    block.accumulate_grads(&g, &vars).unwrap();
    fd_check_block(&model.critic.params, &grads_of(&block), &mut r, |blk| {
        let critic = Mlp::from_params(model.critic.spec.clone(), blk.clone()).unwrap();
        exploration_value(&critic, &truth, b, &pred, b * n, GRAD_GAMMA).unwrap()
    })
}

fn smt_value(model: &WorldModel, batch: &[Segment], eps: f64, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars = model.reward.param_vars(&mut tape, false);
    let l = model.smt_on_tape(&mut tape, &vars, batch, eps, &mut rng(seed)).unwrap();
    tape.scalar(l)
}

pub fn grad_smt(instance: u64) -> FdStats {
    let (_, model, batch, mut r) = grad_setup(instance);
    let seed = 91 + instance;
    let eps = 0.1;
    let mut tape = Tape::new();
    let vars = model.reward.param_vars(&mut tape, true);
    let loss = model.smt_on_tape(&mut tape, &vars, &batch, eps, &mut rng(seed)).unwrap();
    assert!(tape.scalar(loss) > 0.0, "smoothing loss should be active on a random net");
    let g = tape.backward(loss).unwrap();
    let mut block = model.reward.params.clone();
    block.zero_grad();
    block.accumulate_grads(&g, &vars).unwrap();
    fd_check_block(&model.reward.params, &grads_of(&block), &mut r, |b| {
        let mut m = model.clone();
        m.reward.params = b.clone();
        smt_value(&m, &batch, eps, seed)
    })
}

pub fn grad_org_rew(instance: u64) -> FdStats {
    let (_, model, batch, mut r) = grad_setup(instance);
    let mut tape = Tape::new();
    let vars = model.reward.param_vars(&mut tape, true);
    let loss = model.org_rew_on_tape(&mut tape, &vars, &batch).unwrap();
    let g = tape.backward(loss).unwrap();
    let mut block = model.reward.params.clone();
    block.zero_grad();
    block.accumulate_grads(&g, &vars).unwrap();
    fd_check_block(&model.reward.params, &grads_of(&block), &mut r, |b| {
        let mut m = model.clone();
        m.reward.params = b.clone();
        m.loss_org_rew(&batch).unwrap()
    })
}

fn elite_rows<R: Rng + ?Sized>(planner: &Planner, spec: &EnvSpec, rows: usize, rng: &mut R) -> (Matrix, Vec<usize>, Matrix) {
    let mut states = Vec::new();
    let mut ks = Vec::new();
    let mut zs = Vec::new();
    for _ in 0..rows {
        states.push(uniform_state(spec, rng));
        let a = spec.random_action(rng);
        zs.push(planner.pad_z(&a.z));
        ks.push(a.k);
    }
    (Matrix::from_rows(&states).unwrap(), ks, Matrix::from_rows(&zs).unwrap())
}

fn elite_ll(planner: &Planner, states: &Matrix, ks: &[usize], zs: &Matrix) -> f64 {
    let mut tape = Tape::new();
    let pv = planner.pi_beta.param_vars(&mut tape, false);
    let qv = planner.p_theta.param_vars(&mut tape, false);
    let ll = planner.log_likelihood_on_tape(&mut tape, &pv, &qv, states, ks, zs).unwrap();
    tape.scalar(ll)
}

/// Elite log-likelihood gradients for both planner heads.
pub fn grad_elite_mle(instance: u64) -> FdStats {
    let mut r = rng(2000 + instance);
    let spec = spec_of(GRAD_ENVS[instance as usize % GRAD_ENVS.len()]);
    let mut planner = Planner::new(&spec, PlannerConfig::default(), &mut r).unwrap();
    jitter(&mut planner.pi_beta.params, 0.2, &mut r);
    jitter(&mut planner.p_theta.params, 0.2, &mut r);
    let (states, ks, zs) = elite_rows(&planner, &spec, 6, &mut r);
    let mut tape = Tape::new();
    let pv = planner.pi_beta.param_vars(&mut tape, true);
    let qv = planner.p_theta.param_vars(&mut tape, true);
    let ll = planner.log_likelihood_on_tape(&mut tape, &pv, &qv, &states, &ks, &zs).unwrap();
    let g = tape.backward(ll).unwrap();
    let mut pi = planner.pi_beta.params.clone();
    pi.zero_grad();
    pi.accumulate_grads(&g, &pv).unwrap();
    let mut pt = planner.p_theta.params.clone();
    pt.zero_grad();
    pt.accumulate_grads(&g, &qv).unwrap();
    let mut stats = fd_check_block(&planner.pi_beta.params, &grads_of(&pi), &mut r, |b| {
        let mut p = planner.clone();
        p.pi_beta.params = b.clone();
        elite_ll(&p, &states, &ks, &zs)
    });
    stats.merge(&fd_check_block(&planner.p_theta.params, &grads_of(&pt), &mut r, |b| {
        let mut p = planner.clone();
        p.p_theta.params = b.clone();
        elite_ll(&p, &states, &ks, &zs)
    }));
    stats
}

pub type GradCase = (&'static str, fn(u64) -> FdStats);

pub const GRADIENT_CASES: [GradCase; 6] = [
    ("loss_org_dyn", grad_org_dyn),
    ("loss_ex_dynamics", grad_ex_dynamics),
    ("loss_ex_critic", grad_ex_critic),
    ("loss_smt", grad_smt),
    ("loss_org_rew", grad_org_rew),
    ("elite_log_likelihood", grad_elite_mle),
];

// ---------------------------------------------------------------------------
// FGSM

#[derive(Clone, Debug, Default)]
pub struct FgsmStats {
    pub coords: usize,
    pub agree: usize,
    /// Coordinates whose numeric gradient is too small to carry a sign.
    pub flat: usize,
    pub zero_eps_exact: bool,
}

impl FgsmStats {
    pub fn agreement(&self) -> f64 {
        let signed = self.coords - self.flat;
        if signed == 0 {
            0.0
        } else {
            self.agree as f64 / signed as f64
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Step signs of `fgsm_perturb` against central differences of
/// `(R(s) − R(x))²` at the Gaussian start point, over `nets` smooth nets.
pub fn fgsm_sign_agreement(nets: usize, seed: u64) -> FgsmStats {
    let mut r = rng(seed);
    let cfg = WorldModelConfig {
        activation: Activation::Tanh,
        ..WorldModelConfig::default()
    };
    let eps = 0.1;
    let h = 1e-6;
    let mut stats = FgsmStats {
        zero_eps_exact: true,
        ..FgsmStats::default()
    };
    for i in 0..nets {
        let spec = spec_of(GRAD_ENVS[i % GRAD_ENVS.len()]);
        let model = random_model(&spec, cfg.clone(), &mut r);
        let s = uniform_state(&spec, &mut r);
        let a = spec.random_action(&mut r);

        let mut draw = r.clone();
        let start: Vec<f64> = s.iter().map(|v| v + eps * normal(&mut draw)).collect();
        let out = model.fgsm_perturb(&s, &a, eps, &mut r).unwrap();
        let anchor = model.predict_reward(&s, &a).unwrap();
        let gap_sq = |x: &[f64]| (anchor - model.predict_reward(x, &a).unwrap()).powi(2);
        for j in 0..s.len() {
            stats.coords += 1;
            let mut xp = start.clone();
            xp[j] += h;
            let mut xm = start.clone();
            xm[j] -= h;
            let fd = (gap_sq(&xp) - gap_sq(&xm)) / (2.0 * h);
            if fd.abs() < 1e-9 {
                stats.flat += 1;
                continue;
            }
            let step = (out[j] - start[j]) / eps;
            if sign(step) == sign(fd) && (step.abs() - 1.0).abs() < 1e-6 {
                stats.agree += 1;
            }
        }
        let same = model.fgsm_perturb(&s, &a, 0.0, &mut r).unwrap();
        stats.zero_eps_exact &= same == s;
    }
    stats
}

// ---------------------------------------------------------------------------
// Mutual-information toys

/// One-dimensional, two-action toy: `s' = s + c_k + a_k z + ν ξ` with
/// `z ~ N(μ, σ²)` and `k ~ softmax(logits)`.
#[derive(Clone, Debug)]
pub struct MiToy {
    pub s0: f64,
    pub logits: [f64; 2],
    pub c: [f64; 2],
    pub a: [f64; 2],
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

pub const MI_BINS: usize = 20;
const TOY_Z_BOUND: f64 = 3.0;
const TOY_S_BOUND: f64 = 5.0;

impl MiToy {
    /// Expanding dynamics (`|a_k| ≥ 1`) with transition noise no smaller
    /// than a quarter of a bin.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut signed = |lo: f64, hi: f64| rng.random_range(lo..hi) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let a = [signed(1.0, 2.0), signed(1.0, 2.0)];
        Self {
            s0: rng.random_range(-0.5..0.5),
            logits: [normal(rng), normal(rng)],
            c: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            a,
            mu: rng.random_range(-0.5..0.5),
            sigma: rng.random_range(0.1..0.3),
            nu: rng.random_range(0.1..0.3),
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::HardMove(1),
            state_dim: 1,
            num_actions: 2,
            param_dims: vec![1, 1],
            param_bounds: vec![vec![(-TOY_Z_BOUND, TOY_Z_BOUND)]; 2],
            max_episode_steps: 1,
            reward_range: (0.0, 0.0),
            state_low: vec![-TOY_S_BOUND],
            state_high: vec![TOY_S_BOUND],
        }
    }

    pub fn probs(&self) -> [f64; 2] {
        let m = self.logits[0].max(self.logits[1]);
        let e = [(self.logits[0] - m).exp(), (self.logits[1] - m).exp()];
        [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])]
    }

    pub fn step<R: Rng + ?Sized>(&self, k: usize, z: f64, rng: &mut R) -> f64 {
        self.s0 + self.c[k] + self.a[k] * z + self.nu * normal(rng)
    }

    /// Planner whose heads ignore the state: logits and `(μ, σ)` are
    /// carried by the output biases.
    pub fn planner<R: Rng + ?Sized>(&self, rng: &mut R) -> Planner {
        let mut p = Planner::new(&self.spec(), PlannerConfig::default(), rng).unwrap();
        let last = p.pi_beta.params.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.data_mut().copy_from_slice(&self.logits);
        let last = p.p_theta.params.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.data_mut().copy_from_slice(&[(self.mu / TOY_Z_BOUND).atanh(), self.sigma.ln()]);
        p
    }

    /// Dynamics head fit by Gaussian maximum likelihood on toy samples.
    pub fn fitted_model<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> WorldModel {
        let spec = self.spec();
        let cfg = WorldModelConfig {
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            ..WorldModelConfig::default()
        };
        let mut model = WorldModel::for_env(&spec, cfg, rng).unwrap();
        let pk = self.probs();
        let batch = 128;
        for _ in 0..steps {
            let mut acts = Vec::with_capacity(batch);
            let mut next = Vec::with_capacity(batch);
            for _ in 0..batch {
                let k = usize::from(rng.random::<f64>() >= pk[0]);
                let z = self.mu + self.sigma * normal(rng);
                next.push(self.step(k, z, rng));
                acts.push(HybridAction::new(k, vec![z]));
            }
            let s = Matrix::filled(batch, 1, self.s0);
            let a = model.encode_actions(&acts).unwrap();
            let mut tape = Tape::new();
            let vars = model.dynamics.param_vars(&mut tape, true);
            let sv = tape.constant(s);
            let av = tape.constant(a);
            let (mean, lv) = model.dynamics_on_tape(&mut tape, &vars, sv, av).unwrap();
            let target = tape.constant(Matrix::from_vec(batch, 1, next).unwrap());
            let ll = tape.gaussian_log_density(target, mean, lv).unwrap();
            let m = tape.mean(ll);
            let loss = tape.scale(m, -1.0);
            let g = tape.backward(loss).unwrap();
            model.dynamics.params.zero_grad();
            model.dynamics.params.accumulate_grads(&g, &vars).unwrap();
            adam_step(&mut model.dynamics.params, &model.cfg.adam).unwrap();
        }
        model
    }

    /// `I(s'; (k, z) | s)` with `z` and `s'` each discretized to
    /// [`MI_BINS`] bins.
    pub fn binned_mi(&self) -> f64 {
        let pk = self.probs();
        let (zlo, zhi) = (self.mu - 4.0 * self.sigma, self.mu + 4.0 * self.sigma);
        let zw = (zhi - zlo) / MI_BINS as f64;
        let mut pz: Vec<f64> = (0..MI_BINS)
            .map(|j| {
                let lo = zlo + j as f64 * zw;
                normal_cdf((lo + zw - self.mu) / self.sigma) - normal_cdf((lo - self.mu) / self.sigma)
            })
            .collect();
        let total: f64 = pz.iter().sum();
        pz.iter_mut().for_each(|p| *p /= total);
        let centers: Vec<f64> = (0..MI_BINS).map(|j| zlo + (j as f64 + 0.5) * zw).collect();
        let mean = |k: usize, z: f64| self.c[k] + self.a[k] * z;
        let (mut slo, mut shi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..2 {
            for &z in &centers {
                slo = slo.min(mean(k, z));
                shi = shi.max(mean(k, z));
            }
        }
        slo -= 4.0 * self.nu;
        shi += 4.0 * self.nu;
        let sw = (shi - slo) / MI_BINS as f64;
        let edge = |b: usize| match b {
            0 => f64::NEG_INFINITY,
            b if b == MI_BINS => f64::INFINITY,
            b => slo + b as f64 * sw,
        };
        let mut cond = vec![vec![[0.0; MI_BINS]; MI_BINS]; 2];
        let mut marginal = [0.0; MI_BINS];
        for k in 0..2 {
            for (j, &z) in centers.iter().enumerate() {
                for b in 0..MI_BINS {
                    let p = normal_cdf((edge(b + 1) - mean(k, z)) / self.nu) - normal_cdf((edge(b) - mean(k, z)) / self.nu);
                    cond[k][j][b] = p;
                    marginal[b] += pk[k] * pz[j] * p;
                }
            }
        }
        let mut mi = 0.0;
        for k in 0..2 {
            for j in 0..MI_BINS {
                for b in 0..MI_BINS {
                    let p = cond[k][j][b];
                    if p > 0.0 && marginal[b] > 0.0 {
                        mi += pk[k] * pz[j] * p * (p / marginal[b]).ln();
                    }
                }
            }
        }
        mi
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes `erfcc`, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07 + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[derive(Clone, Debug)]
pub struct MiOutcome {
    pub aux_mean: f64,
    pub aux_se: f64,
    pub mi: f64,
}

impl MiOutcome {
    pub fn holds(&self) -> bool {
        self.aux_mean <= self.mi + 3.0 * self.aux_se
    }
}

/// Batch-mean auxiliary reward on a toy against its binned mutual information.
pub fn mi_bound_case(toy: &MiToy, samples: usize, fit_steps: usize, seed: u64) -> MiOutcome {
    let mut r = rng(seed);
    let model = toy.fitted_model(fit_steps, &mut r);
    let planner = toy.planner(&mut r);
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sample = planner.sample_hybrid(&[toy.s0], &mut r).unwrap();
        let next = toy.step(sample.action.k, sample.action.z[0], &mut r);
        vals.push(flexplore::planner::aux_reward(&model, &planner, &[toy.s0], &sample.action, &[next]).unwrap());
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MiOutcome {
        aux_mean: mean,
        aux_se: (var / n).sqrt(),
        mi: toy.binned_mi(),
    }
}

// ---------------------------------------------------------------------------
// Spectral norm

/// Largest gap between power iteration and the SVD oracle.
pub fn spectral_vs_svd(count: usize, iters: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let rows = r.random_range(1..=32);
        let cols = r.random_range(1..=32);
        let data: Vec<f64> = (0..rows * cols).map(|_| normal(&mut r)).collect();
        let m = Matrix::from_vec(rows, cols, data.clone()).unwrap();
        let oracle = nalgebra::DMatrix::from_row_slice(rows, cols, &data)
            .singular_values()
            .max();
        let est = flexplore::nn::spectral_norm(&m, iters);
        worst = worst.max((est - oracle).abs());
    }
    worst
}

/// Northwest-corner transport on sorted supports. Monotone couplings are
/// optimal on the line for any convex ground cost.
pub fn monotone_coupling_cost(p: &EmpiricalDist1D, q: &EmpiricalDist1D, cost: impl Fn(f64, f64) -> f64) -> f64 {
    let sorted = |d: &EmpiricalDist1D| {
        let mut v: Vec<(f64, f64)> = d.points().iter().copied().zip(d.weights().iter().copied()).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (a, b) = (sorted(p), sorted(q));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        total += m * cost(a[i].0, b[j].0);
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            ra = a.get(i).map_or(0.0, |x| x.1);
        }
        if rb <= 1e-15 {
            j += 1;
            rb = b.get(j).map_or(0.0, |x| x.1);
        }
    }
    total
}

/// Random weighted pair with supports of size `1..=8` on `[-5, 5)`.
pub fn random_support_pair<R: Rng + ?Sized>(rng: &mut R) -> (EmpiricalDist1D, EmpiricalDist1D) {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    (EmpiricalDist1D::random(n, -5.0, 5.0, rng), EmpiricalDist1D::random(m, -5.0, 5.0, rng))
}
