use rand::Rng;
use rand_distr::StandardNormal;

use super::PlannerConfig;
use crate::envs::{EnvSpec, HybridAction};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, argmax, gumbel_softmax, Activation, Matrix, Mlp, MlpSpec, ParamBlock, ParamVars, Scaler, Tape, Var,
    LN_2PI,
};

pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 2.0;

pub const PI_BLOCK: &str = "pi_beta";
pub const P_BLOCK: &str = "p_theta";

/// Head outputs for a batch of `(state, k)` rows.
#[derive(Clone, Debug)]
pub struct HeadOutputs {
    pub logits: Matrix,
    /// Padded to the largest parameter dimension.
    pub mu: Matrix,
    pub sigma: Matrix,
}

/// One proposal draw.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridSample {
    /// Executable action with `z` clipped into bounds.
    pub action: HybridAction,
    /// Parameters before clipping.
    pub z_raw: Vec<f64>,
    /// Relaxed one-hot sample over discrete actions.
    pub soft: Vec<f64>,
    /// `log p_θ(z_raw | s, k)`.
    pub log_pz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Planner {
    pub cfg: PlannerConfig,
    pub spec: EnvSpec,
    pub pi_beta: Mlp,
    pub p_theta: Mlp,
    pub temperature: f64,
    input: Scaler,
    /// Per discrete action, per coordinate: `(center, half width)` of the bounds.
    z_box: Vec<Vec<(f64, f64)>>,
}

impl Planner {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, cfg: PlannerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let s = spec.state_dim;
        let k = spec.num_actions;
        let p = spec.max_param_dim();
        let pi_spec = MlpSpec::new(s, cfg.hidden_dims.clone(), k, Activation::LeakyReLU);
        let p_spec = MlpSpec::new(s + k, cfg.hidden_dims.clone(), 2 * p.max(1), Activation::LeakyReLU);
        let pi_beta = Mlp::new(PI_BLOCK, pi_spec, rng)?;
        let p_theta = Mlp::new(P_BLOCK, p_spec, rng)?;
        let z_box = spec
            .param_bounds
            .iter()
            .map(|b| b.iter().map(|&(lo, hi)| (0.5 * (lo + hi), 0.5 * (hi - lo))).collect())
            .collect();
        Ok(Self {
            temperature: cfg.temperature,
            cfg,
            spec: spec.clone(),
            pi_beta,
            p_theta,
            input: Scaler::from_box(&spec.state_low, &spec.state_high)?,
            z_box,
        })
    }

    /// Replaces both heads, e.g. from a checkpoint.
    pub fn load_blocks(&mut self, pi_beta: ParamBlock, p_theta: ParamBlock) -> Result<()> {
        self.pi_beta = Mlp::from_params(self.pi_beta.spec.clone(), pi_beta)?;
        self.p_theta = Mlp::from_params(self.p_theta.spec.clone(), p_theta)?;
        Ok(())
    }

    pub fn param_dim(&self, k: usize) -> usize {
        self.spec.param_dims[k]
    }

    fn padded_dim(&self) -> usize {
        self.spec.max_param_dim().max(1)
    }

    /// One environment step of temperature annealing.
    pub fn anneal(&mut self) {
        self.temperature = (self.temperature * self.cfg.temperature_decay).max(self.cfg.temperature_floor);
    }

    fn one_hot(&self, ks: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(ks.len(), self.spec.num_actions);
        for (r, &k) in ks.iter().enumerate() {
            m.set(r, k, 1.0);
        }
        m
    }

    /// Row-wise bound centers, half widths and validity mask for the padded
    /// parameter vector of each `k`.
    fn z_layout(&self, ks: &[usize]) -> (Matrix, Matrix, Matrix) {
        let p = self.padded_dim();
        let mut center = Matrix::zeros(ks.len(), p);
        let mut half = Matrix::filled(ks.len(), p, 1.0);
        let mut mask = Matrix::zeros(ks.len(), p);
        for (r, &k) in ks.iter().enumerate() {
            for (i, &(c, h)) in self.z_box[k].iter().enumerate() {
                center.set(r, i, c);
                half.set(r, i, h);
                mask.set(r, i, 1.0);
            }
        }
        (center, half, mask)
    }

    pub fn logits_batch(&self, states: &Matrix) -> Result<Matrix> {
        self.pi_beta.forward_batch(&self.input.apply(states))
    }

    /// `μ` (inside the parameter box) and clamped `σ` for each `(state, k)`.
    pub fn gaussian_batch(&self, states: &Matrix, ks: &[usize]) -> Result<(Matrix, Matrix)> {
        let x = self.input.apply(states).hcat(&self.one_hot(ks))?;
        let out = self.p_theta.forward_batch(&x)?;
        let p = self.padded_dim();
        let (center, half, _) = self.z_layout(ks);
        let mut mu = Matrix::zeros(ks.len(), p);
        let mut sigma = Matrix::zeros(ks.len(), p);
        for r in 0..ks.len() {
            let o = out.row(r);
            for i in 0..p {
                mu.set(r, i, center.get(r, i) + half.get(r, i) * o[i].tanh());
                sigma.set(r, i, o[p + i].clamp(SIGMA_MIN.ln(), SIGMA_MAX.ln()).exp());
            }
        }
        Ok((mu, sigma))
    }

    pub fn heads(&self, states: &Matrix, ks: &[usize]) -> Result<HeadOutputs> {
        let logits = self.logits_batch(states)?;
        let (mu, sigma) = self.gaussian_batch(states, ks)?;
        Ok(HeadOutputs { logits, mu, sigma })
    }

    /// Draws one hybrid action per state row.
    pub fn sample_batch<R: Rng + ?Sized>(&self, states: &Matrix, rng: &mut R) -> Result<Vec<HybridSample>> {
        self.sample_batch_mixed(states, 0.0, rng)
    }

    /// Like [`Planner::sample_batch`], but each row draws `k` uniformly with
    /// probability `uniform_prob` instead of from `π_β`.
    pub fn sample_batch_mixed<R: Rng + ?Sized>(&self, states: &Matrix, uniform_prob: f64, rng: &mut R) -> Result<Vec<HybridSample>> {
        let logits = self.logits_batch(states)?;
        let num_actions = self.spec.num_actions;
        let mut softs = Vec::with_capacity(states.rows());
        let mut ks = Vec::with_capacity(states.rows());
        for row in logits.iter_rows() {
            let soft = if uniform_prob > 0.0 && rng.random::<f64>() < uniform_prob {
                let mut one_hot = vec![0.0; num_actions];
                one_hot[rng.random_range(0..num_actions)] = 1.0;
                one_hot
            } else {
                gumbel_softmax(row, self.temperature, rng)?
            };
            ks.push(argmax(&soft));
            softs.push(soft);
        }
        let (mu, sigma) = self.gaussian_batch(states, &ks)?;
        let mut out = Vec::with_capacity(states.rows());
        for (r, (k, soft)) in ks.into_iter().zip(softs).enumerate() {
            let d = self.param_dim(k);
            let mut z_raw = Vec::with_capacity(d);
            let mut log_pz = 0.0;
            for i in 0..d {
                let (m, s) = (mu.get(r, i), sigma.get(r, i));
                let e: f64 = rng.sample(StandardNormal);
                z_raw.push(m + s * e);
                log_pz += -s.ln() - 0.5 * LN_2PI - 0.5 * e * e;
            }
            let z = z_raw
                .iter()
                .zip(&self.spec.param_bounds[k])
                .map(|(v, &(lo, hi))| v.clamp(lo, hi))
                .collect();
            out.push(HybridSample {
                action: HybridAction { k, z },
                z_raw,
                soft,
                log_pz,
            });
        }
        Ok(out)
    }

    pub fn sample_hybrid<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<HybridSample> {
        if s.len() != self.spec.state_dim {
            return Err(Error::shape("planner state", self.spec.state_dim, s.len()));
        }
        Ok(self.sample_batch(&Matrix::row_vector(s), rng)?.remove(0))
    }

    /// `log p_θ(z | s, k)` for one row.
    pub fn log_pz(&self, s: &[f64], k: usize, z: &[f64]) -> Result<f64> {
        if k >= self.spec.num_actions {
            return Err(Error::Parameter(format!("discrete action {k} out of range")));
        }
        if z.len() != self.param_dim(k) {
            return Err(Error::shape("planner parameters", self.param_dim(k), z.len()));
        }
        let (mu, sigma) = self.gaussian_batch(&Matrix::row_vector(s), &[k])?;
        let d = z.len();
        Ok(crate::nn::gaussian_log_prob(z, &mu.row(0)[..d], &sigma.row(0)[..d]))
    }

    /// Mean log-likelihood of `(k, z)` rows on the tape, as a `1×1` node.
    pub fn log_likelihood_on_tape(
        &self,
        tape: &mut Tape,
        pi_vars: &ParamVars,
        p_vars: &ParamVars,
        states: &Matrix,
        ks: &[usize],
        zs: &Matrix,
    ) -> Result<Var> {
        let p = self.padded_dim();
        if zs.rows() != ks.len() || zs.cols() != p || states.rows() != ks.len() {
            return Err(Error::shape("elite rows", ks.len(), zs.rows()));
        }
        let sn = tape.constant(self.input.apply(states));
        let logits = self.pi_beta.forward_with(tape, sn, pi_vars)?;
        let logp = tape.log_softmax(logits);
        let lp_k = tape.pick(logp, ks.to_vec())?;

        let oh = tape.constant(self.one_hot(ks));
        let x = tape.concat(sn, oh)?;
        let out = self.p_theta.forward_with(tape, x, p_vars)?;
        let raw_mu = tape.slice(out, 0, p)?;
        let raw_ls = tape.slice(out, p, p)?;
        let (center, half, mask) = self.z_layout(ks);
        let squashed = tape.act(raw_mu, Activation::Tanh);
        let half = tape.constant(half);
        let spread = tape.mul(squashed, half)?;
        let center = tape.constant(center);
        let mu = tape.add(spread, center)?;
        let ls = tape.clamp(raw_ls, SIGMA_MIN.ln(), SIGMA_MAX.ln());
        let z = tape.constant(zs.clone());
        let diff = tape.sub(z, mu)?;
        let neg_ls = tape.scale(ls, -1.0);
        let inv_sigma = tape.exp(neg_ls);
        let standard = tape.mul(diff, inv_sigma)?;
        let sq = tape.square(standard);
        let half_sq = tape.scale(sq, -0.5);
        let centered = tape.sub(half_sq, ls)?;
        let per_coord = tape.offset(centered, -0.5 * LN_2PI);
        let mask = tape.constant(mask);
        let masked = tape.mul(per_coord, mask)?;
        let lp_z = tape.row_sum(masked);
        let total = tape.add(lp_k, lp_z)?;
        Ok(tape.mean(total))
    }

    /// One Adam step on both heads maximizing the mean log-likelihood of the
    /// given rows. Returns the log-likelihood before the step.
    pub fn mle_step(&mut self, states: &Matrix, ks: &[usize], zs: &Matrix) -> Result<f64> {
        let mut tape = Tape::new();
        let pv = self.pi_beta.param_vars(&mut tape, true);
        let qv = self.p_theta.param_vars(&mut tape, true);
        let ll = self.log_likelihood_on_tape(&mut tape, &pv, &qv, states, ks, zs)?;
        let loss = tape.scale(ll, -1.0);
        let grads = tape.backward(loss)?;
        self.pi_beta.params.zero_grad();
        self.p_theta.params.zero_grad();
        self.pi_beta.params.accumulate_grads(&grads, &pv)?;
        self.p_theta.params.accumulate_grads(&grads, &qv)?;
        let value = tape.scalar(ll);
        if !value.is_finite() {
            self.pi_beta.params.zero_grad();
            self.p_theta.params.zero_grad();
            return Err(Error::NonFinite("elite log-likelihood".into()));
        }
        adam_step(&mut self.pi_beta.params, &self.cfg.adam)?;
        adam_step(&mut self.p_theta.params, &self.cfg.adam)?;
        Ok(value)
    }

    /// Pads a parameter vector to the head's output width.
    pub fn pad_z(&self, z: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.padded_dim()];
        v[..z.len()].copy_from_slice(z);
        v
    }
}
