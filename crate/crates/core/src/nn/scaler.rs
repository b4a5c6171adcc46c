use serde::{Deserialize, Serialize};

use super::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Per-column affine map `(x − center) · scale`, typically from a box to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            center: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Maps `[low, high]` onto `[-1, 1]`; degenerate columns pass through shifted.
    pub fn from_box(low: &[f64], high: &[f64]) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::shape("scaler box", low.len(), high.len()));
        }
        let center = low.iter().zip(high).map(|(l, h)| 0.5 * (l + h)).collect();
        let scale = low
            .iter()
            .zip(high)
            .map(|(l, h)| if h > l { 2.0 / (h - l) } else { 1.0 })
            .collect();
        Ok(Self { center, scale })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_identity(&self) -> bool {
        self.center.iter().all(|&c| c == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        if self.is_identity() {
            return out;
        }
        for r in 0..out.rows() {
            for ((v, c), s) in out.row_mut(r).iter_mut().zip(&self.center).zip(&self.scale) {
                *v = (*v - c) * s;
            }
        }
        out
    }

    pub fn on_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.is_identity() {
            return Ok(x);
        }
        let n = tape.value(x).rows();
        let center = tape.constant(Matrix::from_rows(&vec![self.center.clone(); n])?);
        let scale = tape.constant(Matrix::from_rows(&vec![self.scale.clone(); n])?);
        let shifted = tape.sub(x, center)?;
        tape.mul(shifted, scale)
    }
}
