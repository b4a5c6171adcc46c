use serde::{Deserialize, Serialize};

use crate::envs::HybridAction;
use crate::error::{Error, Result};

/// One environment transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: HybridAction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// `H` consecutive transitions from one episode.
///
/// Windows that run past the end of a terminated episode are padded with
/// absorbing records (terminal state to itself, reward 0); `mask[t]` is
/// `false` for those.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub records: Vec<Transition>,
    pub mask: Vec<bool>,
    pub gamma: f64,
}

impl Segment {
    /// Builds an unpadded segment after checking the chaining invariant.
    pub fn new(records: Vec<Transition>, gamma: f64) -> Result<Self> {
        let mask = vec![true; records.len()];
        Self::with_mask(records, mask, gamma)
    }

    pub fn with_mask(records: Vec<Transition>, mask: Vec<bool>, gamma: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Parameter("segment must contain at least one record".into()));
        }
        if mask.len() != records.len() {
            return Err(Error::shape("segment mask", records.len(), mask.len()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Parameter(format!("discount must be in (0, 1], got {gamma}")));
        }
        for (t, w) in records.windows(2).enumerate() {
            if w[0].next_state != w[1].state {
                return Err(Error::Parameter(format!(
                    "segment records {t} and {} do not chain",
                    t + 1
                )));
            }
        }
        Ok(Self { records, mask, gamma })
    }

    /// Skips the chaining check; used for replay data that may have been
    /// perturbed in place.
    pub(crate) fn from_parts(records: Vec<Transition>, mask: Vec<bool>, gamma: f64) -> Self {
        debug_assert_eq!(records.len(), mask.len());
        Self { records, mask, gamma }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn discount(&self, t: usize) -> f64 {
        self.gamma.powi(t as i32)
    }
}

/// Checks that a batch is nonempty and all segments share length and discount.
pub(crate) fn batch_shape(batch: &[Segment]) -> Result<(usize, usize, f64)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Parameter("empty segment batch".into()))?;
    let h = first.len();
    for s in batch {
        if s.len() != h {
            return Err(Error::shape("segment batch horizon", h, s.len()));
        }
        if s.gamma != first.gamma {
            return Err(Error::Parameter("segments in a batch must share the discount".into()));
        }
    }
    Ok((batch.len(), h, first.gamma))
}
