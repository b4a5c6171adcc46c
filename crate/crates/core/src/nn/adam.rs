use serde::{Deserialize, Serialize};

use super::mlp::ParamBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam update from the block's accumulated gradients,
/// which are zeroed afterwards.
///
/// Non-finite gradients, or an update that would produce non-finite
/// parameters, leave the block untouched and return an error.
pub fn adam_step(params: &mut ParamBlock, cfg: &AdamConfig) -> Result<()> {
    if !params.grads_finite() {
        return Err(Error::NonFinite(format!("gradients of {}", params.name)));
    }
    let step = params.opt.step + 1;
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);

    let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    };

    let mut layers = params.layers.clone();
    let mut m_all = params.opt.m.clone();
    let mut v_all = params.opt.v.clone();
    for l in 0..layers.len() {
        let g = &params.grads[l];
        update(layers[l].weight.data_mut(), m_all[l].weight.data_mut(), v_all[l].weight.data_mut(), g.weight.data());
        update(layers[l].bias.data_mut(), m_all[l].bias.data_mut(), v_all[l].bias.data_mut(), g.bias.data());
    }
    if !layers.iter().all(|l| l.weight.all_finite() && l.bias.all_finite()) {
        return Err(Error::NonFinite(format!("Adam update of {}", params.name)));
    }
    params.layers = layers;
    params.opt.m = m_all;
    params.opt.v = v_all;
    params.opt.step = step;
    params.zero_grad();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::LayerParams;
    use crate::nn::tensor::Matrix;

    fn scalar_block(x: f64) -> ParamBlock {
        ParamBlock::new(
            "x",
            vec![LayerParams {
                weight: Matrix::scalar(x),
                bias: Matrix::zeros(1, 1),
            }],
        )
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut b = scalar_block(1.5);
        adam_step(&mut b, &AdamConfig::default()).unwrap();
        assert_eq!(b.param(0), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // oracle: m1 = 0.1 g, v1 = 0.001 g², m̂ = g, v̂ = g², step = lr·g/(|g|+eps)
        let mut b = scalar_block(0.0);
        b.grads[0].weight.data_mut()[0] = 1.0;
        let cfg = AdamConfig::with_lr(0.1);
        adam_step(&mut b, &cfg).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((b.param(0) - expected).abs() < 1e-12);
        assert_eq!(b.grad(0), 0.0, "grads are zeroed after the step");
    }

    #[test]
    fn minimizes_quadratic() {
        let target = 2.5;
        let mut b = scalar_block(-1.0);
        let cfg = AdamConfig::with_lr(0.05);
        for _ in 0..2000 {
            let x = b.param(0);
            b.grads[0].weight.data_mut()[0] = 2.0 * (x - target);
            adam_step(&mut b, &cfg).unwrap();
        }
        assert!((b.param(0) - target).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut b = scalar_block(0.7);
        b.grads[0].weight.data_mut()[0] = f64::NAN;
        let before = b.clone();
        assert!(adam_step(&mut b, &AdamConfig::default()).is_err());
        assert_eq!(b.layers, before.layers);
        assert_eq!(b.opt.step, 0);
    }
}
