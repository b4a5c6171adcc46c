//! Model losses and the combined update.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;

use super::critic::{critic_ascent, exploration_objective, CriticReport};
use super::segment::batch_shape;
use super::{Segment, WorldModel};
use crate::error::{Error, Result};
use crate::nn::tape::sign;
use crate::nn::{adam_step, Matrix, ParamVars, Tape, Var};

/// Initial running maximum when gating reward smoothing along a segment.
pub const MAX_REWARD_INIT: f64 = -100.0;

/// Switches and weights for one combined model update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOptions {
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub smoothing_active: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub loss_org_dyn: f64,
    pub loss_ex: f64,
    pub critic_objective: f64,
    pub critic_penalty: f64,
    pub loss_org_rew: f64,
    pub loss_smt: f64,
    pub smoothing_active: bool,
    pub total: f64,
    /// The update was skipped because of non-finite values.
    pub skipped: bool,
    pub critic_reset: bool,
}

/// Stacked per-step data of a batch, t-major: row `t·B + b`.
struct Stacked {
    states: Matrix,
    actions: Matrix,
    next: Matrix,
    rewards: Vec<f64>,
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

impl WorldModel {
    fn stack(&self, batch: &[Segment]) -> Result<(Stacked, usize, usize, f64)> {
        let (b, h, gamma) = batch_shape(batch)?;
        let mut states = Vec::with_capacity(b * h);
        let mut next = Vec::with_capacity(b * h);
        let mut actions = Vec::with_capacity(b * h);
        let mut rewards = Vec::with_capacity(b * h);
        for t in 0..h {
            for seg in batch {
                let r = &seg.records[t];
                states.push(r.state.clone());
                next.push(r.next_state.clone());
                actions.push(self.encode_action(&r.action)?);
                rewards.push(r.reward);
            }
        }
        let stacked = Stacked {
            states: Matrix::from_rows(&states)?,
            actions: Matrix::from_rows(&actions)?,
            next: Matrix::from_rows(&next)?,
            rewards,
        };
        if stacked.states.cols() != self.dims.state_dim {
            return Err(Error::shape("segment states", self.dims.state_dim, stacked.states.cols()));
        }
        Ok((stacked, b, h, gamma))
    }

    fn step_rows(m: &Matrix, t: usize, b: usize) -> Matrix {
        Matrix::from_vec(b, m.cols(), m.data()[t * b * m.cols()..(t + 1) * b * m.cols()].to_vec()).expect("rows")
    }

    /// `Σ_t γ^t mean_b ‖s_{t+1} − ŝ_{t+1}‖²` with open-loop mean rollouts.
    pub fn org_dyn_on_tape(&self, tape: &mut Tape, vars: &ParamVars, batch: &[Segment]) -> Result<Var> {
        let (st, b, h, gamma) = self.stack(batch)?;
        let mut s_hat = tape.constant(Self::step_rows(&st.states, 0, b));
        let mut total: Option<Var> = None;
        for t in 0..h {
            let a = tape.constant(Self::step_rows(&st.actions, t, b));
            let (mean, _) = self.dynamics_on_tape(tape, vars, s_hat, a)?;
            let target = tape.constant(Self::step_rows(&st.next, t, b));
            let err = tape.sub(mean, target)?;
            let sq = tape.square(err);
            let per_sample = tape.row_sum(sq);
            let m = tape.mean(per_sample);
            let term = tape.scale(m, gamma.powi(t as i32));
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
            s_hat = mean;
        }
        Ok(total.expect("h >= 1"))
    }

    /// Exploration loss with one-step reparameterized predictions from the
    /// true states and the critic held fixed.
    pub fn ex_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        dyn_vars: &ParamVars,
        batch: &[Segment],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Var> {
        if n_samples == 0 {
            return Err(Error::Parameter("n_model_samples must be >= 1".into()));
        }
        let (st, b, _h, gamma) = self.stack(batch)?;
        let s = tape.constant(st.states);
        let a = tape.constant(st.actions);
        let (mean, log_var) = self.dynamics_on_tape(tape, dyn_vars, s, a)?;
        let mean_r = tape.repeat_rows(mean, n_samples);
        let lv_r = tape.repeat_rows(log_var, n_samples);
        let half = tape.scale(lv_r, 0.5);
        let std = tape.exp(half);
        let (rows, cols) = tape.value(std).shape();
        let eps = tape.constant(gaussian_matrix(rows, cols, rng));
        let noise = tape.mul(std, eps)?;
        let pred = tape.add(mean_r, noise)?;
        let truth = tape.constant(st.next);
        let critic_vars = self.critic.param_vars(tape, false);
        exploration_objective(tape, &self.critic, &critic_vars, truth, b, pred, b * n_samples, gamma)
    }

    /// `Σ_t γ^t mean_b (r_t − R(s_t, k_t, z_t))²` on the true states.
    pub fn org_rew_on_tape(&self, tape: &mut Tape, vars: &ParamVars, batch: &[Segment]) -> Result<Var> {
        let (st, b, _h, gamma) = self.stack(batch)?;
        let s = tape.constant(st.states);
        let a = tape.constant(st.actions);
        let pred = self.reward_on_tape(tape, vars, s, a)?;
        let target = tape.constant(Matrix::from_vec(st.rewards.len(), 1, st.rewards)?);
        let err = tape.sub(pred, target)?;
        let sq = tape.square(err);
        let n = tape.value(sq).rows();
        let w = Matrix::from_vec(n, 1, (0..n).map(|i| gamma.powi((i / b) as i32) / b as f64).collect())?;
        let wv = tape.constant(w);
        let weighted = tape.mul(sq, wv)?;
        Ok(tape.sum(weighted))
    }

    /// Indices of the records whose predicted reward beats the running
    /// maximum (initialized to [`MAX_REWARD_INIT`]). Padded records never
    /// qualify.
    pub fn smoothing_steps(&self, seg: &Segment) -> Result<Vec<usize>> {
        let states: Vec<Vec<f64>> = seg.records.iter().map(|r| r.state.clone()).collect();
        let actions = self.encode_actions(seg.records.iter().map(|r| &r.action))?;
        let rewards = self.reward_batch(&Matrix::from_rows(&states)?, &actions)?;
        Ok(gate_running_max(&rewards, &seg.mask))
    }

    /// FGSM perturbation of a batch of states (one row per state).
    pub fn fgsm_batch<R: Rng + ?Sized>(&self, states: &Matrix, actions: &Matrix, epsilon: f64, rng: &mut R) -> Result<Matrix> {
        if !(epsilon >= 0.0) {
            return Err(Error::Parameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let mut start = states.clone();
        for v in start.data_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += epsilon * e;
        }
        if epsilon == 0.0 {
            return Ok(states.clone());
        }
        let grad = self.smoothing_gap_gradient(states, &start, actions)?;
        let mut out = start;
        for (v, g) in out.data_mut().iter_mut().zip(grad.data()) {
            *v += epsilon * sign(*g);
        }
        Ok(out)
    }

    /// `∇_x (R(s) − R(x))²` evaluated at `x`, row by row.
    pub fn smoothing_gap_gradient(&self, states: &Matrix, x: &Matrix, actions: &Matrix) -> Result<Matrix> {
        let anchor = self.reward_batch(states, actions)?;
        let mut tape = Tape::new();
        let vars = self.reward.param_vars(&mut tape, false);
        let xv = tape.leaf(x.clone());
        let av = tape.constant(actions.clone());
        let rx = self.reward_on_tape(&mut tape, &vars, xv, av)?;
        let rs = tape.constant(Matrix::from_vec(anchor.len(), 1, anchor)?);
        let gap = tape.sub(rs, rx)?;
        let sq = tape.square(gap);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss)?;
        Ok(grads.get_or_zeros(xv, x.rows(), x.cols()))
    }

    /// Single-state FGSM: `s' ~ N(s, ε²I)`, then one signed gradient step
    /// of size `ε` on the squared reward gap.
    pub fn fgsm_perturb<R: Rng + ?Sized>(&self, s: &[f64], a: &crate::envs::HybridAction, epsilon: f64, rng: &mut R) -> Result<Vec<f64>> {
        let states = Matrix::row_vector(s);
        let actions = Matrix::row_vector(&self.encode_action(a)?);
        Ok(self.fgsm_batch(&states, &actions, epsilon, rng)?.into_vec())
    }

    /// Gradient of `(R(s, k, z) − target)²` with respect to `s` and `z`.
    pub fn reward_error_gradient(&self, s: &[f64], a: &crate::envs::HybridAction, target: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = self.reward.param_vars(&mut tape, false);
        let sv = tape.leaf(Matrix::row_vector(s));
        let av = tape.leaf(Matrix::row_vector(&self.encode_action(a)?));
        let r = self.reward_on_tape(&mut tape, &vars, sv, av)?;
        let err = tape.offset(r, -target);
        let loss = tape.square(err);
        let grads = tape.backward(loss)?;
        let gs = grads.get_or_zeros(sv, 1, s.len()).into_vec();
        let ga = grads.get_or_zeros(av, 1, self.dims.num_actions + self.dims.max_param_dim).into_vec();
        let k = self.dims.num_actions;
        Ok((gs, ga[k..k + a.z.len()].to_vec()))
    }

    /// Batch-mean of the per-segment smoothing sums.
    pub fn smt_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        batch: &[Segment],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Var> {
        let (b, _, _) = batch_shape(batch)?;
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for seg in batch {
            for t in self.smoothing_steps(seg)? {
                states.push(seg.records[t].state.clone());
                actions.push(self.encode_action(&seg.records[t].action)?);
            }
        }
        if states.is_empty() {
            return Ok(tape.constant(Matrix::scalar(0.0)));
        }
        let s = Matrix::from_rows(&states)?;
        let a = Matrix::from_rows(&actions)?;
        let perturbed = self.fgsm_batch(&s, &a, epsilon, rng)?;
        let sv = tape.constant(s);
        let pv = tape.constant(perturbed);
        let av = tape.constant(a);
        let r_s = self.reward_on_tape(tape, vars, sv, av)?;
        let r_p = self.reward_on_tape(tape, vars, pv, av)?;
        let gap = tape.sub(r_s, r_p)?;
        let sq = tape.square(gap);
        let total = tape.sum(sq);
        Ok(tape.scale(total, 1.0 / b as f64))
    }

    pub fn loss_org_dyn(&self, batch: &[Segment]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.dynamics.param_vars(&mut tape, false);
        let l = self.org_dyn_on_tape(&mut tape, &vars, batch)?;
        Ok(tape.scalar(l))
    }

    pub fn loss_ex<R: Rng + ?Sized>(&self, batch: &[Segment], n_samples: usize, rng: &mut R) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.dynamics.param_vars(&mut tape, false);
        let l = self.ex_on_tape(&mut tape, &vars, batch, n_samples, rng)?;
        Ok(tape.scalar(l))
    }

    pub fn loss_total_dyn<R: Rng + ?Sized>(&self, batch: &[Segment], lambda: f64, rng: &mut R) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let org = self.loss_org_dyn(batch)?;
        if lambda == 0.0 {
            return Ok(org);
        }
        Ok(org + lambda * self.loss_ex(batch, self.cfg.n_model_samples, rng)?)
    }

    pub fn loss_org_rew(&self, batch: &[Segment]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.reward.param_vars(&mut tape, false);
        let l = self.org_rew_on_tape(&mut tape, &vars, batch)?;
        Ok(tape.scalar(l))
    }

    /// Smoothing loss of a single segment.
    pub fn loss_smt<R: Rng + ?Sized>(&self, seg: &Segment, epsilon: f64, rng: &mut R) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.reward.param_vars(&mut tape, false);
        let l = self.smt_on_tape(&mut tape, &vars, std::slice::from_ref(seg), epsilon, rng)?;
        Ok(tape.scalar(l))
    }

    /// Reward loss with the smoothing term gated on `timestep > threshold`.
    pub fn loss_total_rew<R: Rng + ?Sized>(
        &self,
        batch: &[Segment],
        mu: f64,
        epsilon: f64,
        timestep: u64,
        threshold: u64,
        rng: &mut R,
    ) -> Result<f64> {
        let org = self.loss_org_rew(batch)?;
        if timestep <= threshold || mu == 0.0 {
            return Ok(org);
        }
        let mut smt = 0.0;
        for seg in batch {
            smt += self.loss_smt(seg, epsilon, rng)?;
        }
        Ok(org + mu * smt / batch.len() as f64)
    }

    /// Samples predicted next states for every record, `n` per record,
    /// t-major and grouped as in the exploration objective.
    fn exploration_clouds<R: Rng + ?Sized>(&self, batch: &[Segment], n: usize, rng: &mut R) -> Result<(Matrix, Matrix, usize)> {
        let (st, b, _, _) = self.stack(batch)?;
        let (mean, log_var) = self.predict_batch(&st.states, &st.actions)?;
        let sd = self.dims.state_dim;
        let mut pred = Matrix::zeros(mean.rows() * n, sd);
        for r in 0..mean.rows() {
            for j in 0..n {
                let row = pred.row_mut(r * n + j);
                for c in 0..sd {
                    let e: f64 = rng.sample(StandardNormal);
                    row[c] = mean.get(r, c) + (0.5 * log_var.get(r, c)).exp() * e;
                }
            }
        }
        Ok((st.next, pred, b))
    }

    /// `inner_steps` critic ascent steps on the batch. A divergent critic is
    /// restored to its initial parameters and flagged.
    pub fn critic_adversarial_step<R: Rng + ?Sized>(&mut self, batch: &[Segment], inner_steps: usize, rng: &mut R) -> Result<CriticReport> {
        if inner_steps == 0 {
            return Ok(CriticReport::default());
        }
        let n = self.cfg.n_model_samples;
        let (truth, pred, b) = self.exploration_clouds(batch, n, rng)?;
        let gamma = batch[0].gamma;
        let cfg = self.cfg.critic.clone();
        match critic_ascent(&mut self.critic, &truth, b, &pred, b * n, gamma, inner_steps, &cfg) {
            Ok(r) => Ok(r),
            Err(Error::NonFinite(msg)) => {
                warn!("critic diverged ({msg}); restoring initial parameters");
                self.reset_critic();
                Ok(CriticReport {
                    reset: true,
                    ..CriticReport::default()
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Critic ascent (when `lambda > 0`), then one Adam step on dynamics and
    /// reward heads for `L_dyn + λ L_ex + α (L_rew + μ L_smt)`.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[Segment], opts: &UpdateOptions, rng: &mut R) -> Result<LossReport> {
        let mut report = LossReport {
            smoothing_active: opts.smoothing_active,
            ..LossReport::default()
        };
        if opts.lambda > 0.0 {
            let c = self.critic_adversarial_step(batch, self.cfg.critic_steps, rng)?;
            report.critic_objective = c.objective;
            report.critic_penalty = c.penalty;
            report.critic_reset = c.reset;
        }
        let mut tape = Tape::new();
        let dv = self.dynamics.param_vars(&mut tape, true);
        let rv = self.reward.param_vars(&mut tape, true);
        let org_dyn = self.org_dyn_on_tape(&mut tape, &dv, batch)?;
        let mut total = org_dyn;
        report.loss_org_dyn = tape.scalar(org_dyn);
        if opts.lambda > 0.0 {
            let ex = self.ex_on_tape(&mut tape, &dv, batch, self.cfg.n_model_samples, rng)?;
            report.loss_ex = tape.scalar(ex);
            let w = tape.scale(ex, opts.lambda);
            total = tape.add(total, w)?;
        }
        let org_rew = self.org_rew_on_tape(&mut tape, &rv, batch)?;
        report.loss_org_rew = tape.scalar(org_rew);
        let mut rew = org_rew;
        if opts.smoothing_active && opts.mu > 0.0 {
            let smt = self.smt_on_tape(&mut tape, &rv, batch, opts.epsilon, rng)?;
            report.loss_smt = tape.scalar(smt);
            let w = tape.scale(smt, opts.mu);
            rew = tape.add(rew, w)?;
        }
        let rew = tape.scale(rew, opts.alpha);
        total = tape.add(total, rew)?;
        report.total = tape.scalar(total);
        if !report.total.is_finite() {
            report.skipped = true;
            return Ok(report);
        }
        let grads = tape.backward(total)?;
        self.dynamics.params.zero_grad();
        self.reward.params.zero_grad();
        self.dynamics.params.accumulate_grads(&grads, &dv)?;
        self.reward.params.accumulate_grads(&grads, &rv)?;
        if !self.dynamics.params.grads_finite() || !self.reward.params.grads_finite() {
            self.dynamics.params.zero_grad();
            self.reward.params.zero_grad();
            report.skipped = true;
            return Ok(report);
        }
        let adam = self.cfg.adam;
        let dyn_ok = adam_step(&mut self.dynamics.params, &adam);
        let rew_ok = adam_step(&mut self.reward.params, &adam);
        if dyn_ok.is_err() || rew_ok.is_err() {
            self.dynamics.params.zero_grad();
            self.reward.params.zero_grad();
            report.skipped = true;
        }
        Ok(report)
    }
}

/// Running-max gate over predicted rewards; `mask[t] == false` never fires.
pub fn gate_running_max(rewards: &[f64], mask: &[bool]) -> Vec<usize> {
    let mut best = MAX_REWARD_INIT;
    let mut out = Vec::new();
    for (t, (&r, &m)) in rewards.iter().zip(mask).enumerate() {
        if m && r > best {
            best = r;
            out.push(t);
        }
    }
    out
}
