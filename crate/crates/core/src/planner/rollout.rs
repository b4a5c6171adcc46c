use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::Planner;
use crate::envs::HybridAction;
use crate::error::{Error, Result};
use crate::nn::{Matrix, LN_2PI};
use crate::world_model::WorldModel;

const RESAMPLE_ATTEMPTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateTrajectory {
    pub actions: Vec<HybridAction>,
    /// Pre-clip parameters, one per action.
    pub z_raw: Vec<Vec<f64>>,
    /// `H + 1` model states starting at the root.
    pub states: Vec<Vec<f64>>,
    pub raw_return: f64,
    pub aux_return: f64,
    pub total_return: f64,
}

impl CandidateTrajectory {
    fn is_finite(&self) -> bool {
        self.total_return.is_finite() && self.states.iter().flatten().all(|v| v.is_finite())
    }
}

/// Summary of one planning round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub best_total_return: f64,
    pub mean_total_return: f64,
    /// Counts of the first discrete action among the elites.
    pub elite_k_histogram: Vec<usize>,
}

fn log_normal(x: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_var)
        .map(|((x, m), lv)| -0.5 * (lv + LN_2PI + (x - m).powi(2) * (-lv).exp()))
        .sum()
}

/// `log T(s_next | s, k, z) − log p_θ(z | s, k)` for one transition.
pub fn aux_reward(model: &WorldModel, planner: &Planner, s: &[f64], a: &HybridAction, s_next: &[f64]) -> Result<f64> {
    let pred = model.predict(s, a)?;
    if s_next.len() != pred.mean.len() {
        return Err(Error::shape("aux_reward next state", pred.mean.len(), s_next.len()));
    }
    let value = log_normal(s_next, &pred.mean, &pred.log_var) - planner.log_pz(s, a.k, &a.z)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("auxiliary reward".into()));
    }
    Ok(value)
}

/// Indices of the `n` largest totals; ties go to the lower index.
pub fn elite_indices(candidates: &[CandidateTrajectory], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&a, &b| {
        candidates[b]
            .total_return
            .total_cmp(&candidates[a].total_return)
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

impl Planner {
    fn rollout_batch<R: Rng + ?Sized>(&self, model: &WorldModel, s0: &[f64], count: usize, rng: &mut R) -> Result<Vec<CandidateTrajectory>> {
        let h = self.cfg.horizon;
        let gamma = self.cfg.gamma;
        let eta = self.cfg.eta;
        let mut cands: Vec<CandidateTrajectory> = (0..count)
            .map(|_| CandidateTrajectory {
                actions: Vec::with_capacity(h),
                z_raw: Vec::with_capacity(h),
                states: vec![s0.to_vec()],
                raw_return: 0.0,
                aux_return: 0.0,
                total_return: 0.0,
            })
            .collect();
        let mut states = Matrix::from_rows(&vec![s0.to_vec(); count])?;
        let mut discount = 1.0;
        for _ in 0..h {
            let samples = self.sample_batch_mixed(&states, self.cfg.uniform_action_prob, rng)?;
            let actions = model.encode_actions(samples.iter().map(|s| &s.action))?;
            let rewards = model.reward_batch(&states, &actions)?;
            let (mean, log_var) = model.predict_batch(&states, &actions)?;
            let mut next = mean.clone();
            for r in 0..count {
                for (x, lv) in next.row_mut(r).iter_mut().zip(log_var.row(r)) {
                    let e: f64 = rng.sample(StandardNormal);
                    *x += (0.5 * lv).exp() * e;
                }
            }
            for (r, (c, sample)) in cands.iter_mut().zip(samples).enumerate() {
                let aux = if eta > 0.0 {
                    log_normal(next.row(r), mean.row(r), log_var.row(r)) - sample.log_pz
                } else {
                    0.0
                };
                c.raw_return += discount * rewards[r];
                c.aux_return += discount * aux;
                c.actions.push(sample.action);
                c.z_raw.push(sample.z_raw);
                c.states.push(next.row(r).to_vec());
            }
            discount *= gamma;
            if !next.all_finite() {
                // Keep non-finite rows out of the next forward pass.
                for r in 0..count {
                    if next.row(r).iter().any(|v| !v.is_finite()) {
                        next.row_mut(r).copy_from_slice(s0);
                        cands[r].raw_return = f64::NAN;
                    }
                }
            }
            states = next;
        }
        for c in &mut cands {
            c.total_return = c.raw_return + eta * c.aux_return;
        }
        Ok(cands)
    }

    /// `N` open-loop model rollouts of `H` steps from `s0`. Candidates with
    /// non-finite values are redrawn a bounded number of times.
    pub fn rollout_candidates<R: Rng + ?Sized>(&self, model: &WorldModel, s0: &[f64], rng: &mut R) -> Result<Vec<CandidateTrajectory>> {
        if s0.len() != self.spec.state_dim {
            return Err(Error::shape("planner root state", self.spec.state_dim, s0.len()));
        }
        let mut cands = self.rollout_batch(model, s0, self.cfg.n_candidates, rng)?;
        for attempt in 0..=RESAMPLE_ATTEMPTS {
            let bad: Vec<usize> = (0..cands.len()).filter(|&i| !cands[i].is_finite()).collect();
            if bad.is_empty() {
                return Ok(cands);
            }
            if attempt == RESAMPLE_ATTEMPTS {
                break;
            }
            warn!("{} non-finite planner candidates; resampling", bad.len());
            let fresh = self.rollout_batch(model, s0, bad.len(), rng)?;
            for (i, c) in bad.into_iter().zip(fresh) {
                cands[i] = c;
            }
        }
        Err(Error::NonFinite("planner candidates after resampling".into()))
    }

    /// MLE step on the `(k, z)` pairs of the elite candidates at every
    /// rollout step. Returns the elite indices.
    pub fn elite_update(&mut self, candidates: &[CandidateTrajectory]) -> Result<Vec<usize>> {
        if candidates.is_empty() {
            return Err(Error::Parameter("elite update needs candidates".into()));
        }
        let elites = elite_indices(candidates, self.cfg.n_elite.min(candidates.len()));
        let mut states = Vec::new();
        let mut ks = Vec::new();
        let mut zs = Vec::new();
        for &i in &elites {
            let c = &candidates[i];
            for (t, a) in c.actions.iter().enumerate() {
                states.push(c.states[t].clone());
                ks.push(a.k);
                zs.push(self.pad_z(&c.z_raw[t]));
            }
        }
        self.mle_step(&Matrix::from_rows(&states)?, &ks, &Matrix::from_rows(&zs)?)?;
        Ok(elites)
    }

    /// Rollout and refit for `iters` rounds; returns the first action of the
    /// best final-round candidate with a per-round trace.
    pub fn plan_traced<R: Rng + ?Sized>(&mut self, model: &WorldModel, s: &[f64], rng: &mut R) -> Result<(HybridAction, Vec<RoundTrace>)> {
        let mut trace = Vec::with_capacity(self.cfg.iters);
        let mut best = None;
        for round in 0..self.cfg.iters {
            let cands = self.rollout_candidates(model, s, rng)?;
            let elites = self.elite_update(&cands)?;
            let mut hist = vec![0; self.spec.num_actions];
            for &i in &elites {
                hist[cands[i].actions[0].k] += 1;
            }
            let top = &cands[elites[0]];
            trace.push(RoundTrace {
                round,
                best_total_return: top.total_return,
                mean_total_return: cands.iter().map(|c| c.total_return).sum::<f64>() / cands.len() as f64,
                elite_k_histogram: hist,
            });
            best = Some(top.actions[0].clone());
        }
        Ok((best.expect("iters >= 1"), trace))
    }

    pub fn plan<R: Rng + ?Sized>(&mut self, model: &WorldModel, s: &[f64], rng: &mut R) -> Result<HybridAction> {
        Ok(self.plan_traced(model, s, rng)?.0)
    }

    /// Planning that leaves the heads untouched: refits happen on a copy.
    pub fn plan_frozen<R: Rng + ?Sized>(&self, model: &WorldModel, s: &[f64], rng: &mut R) -> Result<HybridAction> {
        self.clone().plan(model, s, rng)
    }
}
