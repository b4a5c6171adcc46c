use std::io::Write;
use std::path::Path;

use super::LossReport;
use crate::error::Result;

pub const LOSS_CSV_HEADER: &str = "iteration,loss_org_dyn,loss_ex,critic_penalty,loss_org_rew,loss_smt,smoothing_active";

/// Per-update loss history.
#[derive(Clone, Debug, Default)]
pub struct LossLog {
    pub rows: Vec<(u64, LossReport)>,
}

impl LossLog {
    pub fn push(&mut self, iteration: u64, report: LossReport) {
        self.rows.push((iteration, report));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOSS_CSV_HEADER);
        out.push('\n');
        for (it, r) in &self.rows {
            out.push_str(&format!(
                "{it},{},{},{},{},{},{}\n",
                r.loss_org_dyn,
                r.loss_ex,
                r.critic_penalty,
                r.loss_org_rew,
                r.loss_smt,
                u8::from(r.smoothing_active)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
