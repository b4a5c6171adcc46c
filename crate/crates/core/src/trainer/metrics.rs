use std::fmt::Write as _;

use serde::Serialize;

use crate::world_model::LossReport;

pub const METRICS_CSV_HEADER: &str =
    "env_step,episode_return,dyn_consistency_error,loss_org_dyn,loss_ex,critic_penalty,loss_org_rew,loss_smt,smoothing_active";

/// One aggregated metrics line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub env_step: u64,
    /// Mean return of episodes finished in the window; `None` if none did.
    pub episode_return: Option<f64>,
    pub dyn_consistency_error: f64,
    pub loss_org_dyn: f64,
    pub loss_ex: f64,
    pub critic_penalty: f64,
    pub loss_org_rew: f64,
    pub loss_smt: f64,
    pub smoothing_active: bool,
}

/// Running sums between two metrics lines.
#[derive(Clone, Debug, Default)]
pub(crate) struct Window {
    returns: Vec<f64>,
    consistency_sum: f64,
    consistency_n: u64,
    losses: [f64; 5],
    updates: u64,
}

impl Window {
    pub fn episode(&mut self, ret: f64) {
        self.returns.push(ret);
    }

    pub fn consistency(&mut self, err: f64) {
        self.consistency_sum += err;
        self.consistency_n += 1;
    }

    pub fn update(&mut self, r: &LossReport) {
        for (acc, v) in self
            .losses
            .iter_mut()
            .zip([r.loss_org_dyn, r.loss_ex, r.critic_penalty, r.loss_org_rew, r.loss_smt])
        {
            *acc += v;
        }
        self.updates += 1;
    }

    pub fn flush(&mut self, env_step: u64, smoothing_active: bool) -> MetricsRow {
        let mean = |s: f64, n: u64| if n == 0 { 0.0 } else { s / n as f64 };
        let l = self.losses.map(|v| mean(v, self.updates));
        let row = MetricsRow {
            env_step,
            episode_return: if self.returns.is_empty() {
                None
            } else {
                Some(self.returns.iter().sum::<f64>() / self.returns.len() as f64)
            },
            dyn_consistency_error: mean(self.consistency_sum, self.consistency_n),
            loss_org_dyn: l[0],
            loss_ex: l[1],
            critic_penalty: l[2],
            loss_org_rew: l[3],
            loss_smt: l[4],
            smoothing_active,
        };
        *self = Window::default();
        row
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let ret = r.episode_return.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.env_step,
            ret,
            r.dyn_consistency_error,
            r.loss_org_dyn,
            r.loss_ex,
            r.critic_penalty,
            r.loss_org_rew,
            r.loss_smt,
            u8::from(r.smoothing_active)
        )
        .expect("string write");
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_averages_and_resets() {
        let mut w = Window::default();
        w.episode(1.0);
        w.episode(3.0);
        w.consistency(0.5);
        w.update(&LossReport { loss_org_dyn: 2.0, ..Default::default() });
        w.update(&LossReport { loss_org_dyn: 4.0, ..Default::default() });
        let r = w.flush(100, true);
        assert_eq!(r.episode_return, Some(2.0));
        assert_eq!(r.loss_org_dyn, 3.0);
        assert_eq!(r.dyn_consistency_error, 0.5);
        assert_eq!(w.flush(200, false).episode_return, None);
    }

    #[test]
    fn csv_leaves_missing_return_blank() {
        let mut w = Window::default();
        let csv = metrics_csv(&[w.flush(100, false)]);
        assert_eq!(csv.lines().nth(1).unwrap(), "100,,0,0,0,0,0,0,0");
    }
}
