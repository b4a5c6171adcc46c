//! Multilayer perceptrons and their parameter storage.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::tape::{Grads, Tape, Var};
use super::tensor::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    /// Applied after every hidden layer.
    pub activation: Activation,
    /// Applied after the last layer; `Identity` for regression heads.
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Parameter(format!("all MLP dims must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    /// `(out, in)` shape of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            self.output_activation
        } else {
            self.activation
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `out × in`, row-major.
    pub weight: Matrix,
    /// `1 × out`.
    pub bias: Matrix,
}

impl LayerParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.rows(), self.weight.cols())
    }
}

/// First/second moment accumulators for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<LayerParams>,
    pub v: Vec<LayerParams>,
    pub step: u64,
}

/// A named set of layer parameters with matching gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub layers: Vec<LayerParams>,
    pub grads: Vec<LayerParams>,
    pub opt: AdamState,
}

/// Tape handles of a block's parameters, in layer order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub layers: Vec<(Var, Var)>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, layers: Vec<LayerParams>) -> Self {
        let zeros: Vec<LayerParams> = layers.iter().map(LayerParams::zeros_like).collect();
        Self {
            name: name.into(),
            grads: zeros.clone(),
            opt: AdamState {
                m: zeros.clone(),
                v: zeros,
                step: 0,
            },
            layers,
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.shape()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.data().len())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.weight.fill(0.0);
            g.bias.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.all_finite() && l.bias.all_finite())
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().all(|l| l.weight.all_finite() && l.bias.all_finite())
    }

    /// Adds the tape gradients of `vars` into `grads`.
    pub fn accumulate_grads(&mut self, grads: &Grads, vars: &ParamVars) -> Result<()> {
        if vars.layers.len() != self.layers.len() {
            return Err(Error::shape(
                format!("accumulate_grads({})", self.name),
                self.layers.len(),
                vars.layers.len(),
            ));
        }
        for (g, (wv, bv)) in self.grads.iter_mut().zip(&vars.layers) {
            if let Some(dw) = grads.get(*wv) {
                g.weight.add_scaled(dw, 1.0);
            }
            if let Some(db) = grads.get(*bv) {
                g.bias.add_scaled(db, 1.0);
            }
        }
        Ok(())
    }

    /// Scalar view over all parameters: weights then bias per layer.
    pub fn param(&self, idx: usize) -> f64 {
        let (l, is_w, i) = self.locate(idx);
        if is_w {
            self.layers[l].weight.data()[i]
        } else {
            self.layers[l].bias.data()[i]
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        let (l, is_w, i) = self.locate(idx);
        if is_w {
            self.layers[l].weight.data_mut()[i] = v;
        } else {
            self.layers[l].bias.data_mut()[i] = v;
        }
    }

    pub fn grad(&self, idx: usize) -> f64 {
        let (l, is_w, i) = self.locate(idx);
        if is_w {
            self.grads[l].weight.data()[i]
        } else {
            self.grads[l].bias.data()[i]
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            let nw = layer.weight.data().len();
            if idx < nw {
                return (l, true, idx);
            }
            idx -= nw;
            let nb = layer.bias.data().len();
            if idx < nb {
                return (l, false, idx);
            }
            idx -= nb;
        }
        panic!("parameter index out of range for block {}", self.name);
    }
}

/// A feed-forward network: spec plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamBlock,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(name: impl Into<String>, spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out_dim, in_dim)| {
                let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
                let data = (0..out_dim * in_dim).map(|_| dist.sample(rng)).collect();
                LayerParams {
                    weight: Matrix::from_vec(out_dim, in_dim, data).expect("layer shape"),
                    bias: Matrix::zeros(1, out_dim),
                }
            })
            .collect();
        Ok(Self {
            params: ParamBlock::new(name, layers),
            spec,
        })
    }

    pub fn from_params(spec: MlpSpec, params: ParamBlock) -> Result<Self> {
        spec.validate()?;
        check_shapes(&spec, &params)?;
        Ok(Self { spec, params })
    }

    pub fn name(&self) -> &str {
        &self.params.name
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, &self.params, x)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        mlp_forward_batch(&self.spec, &self.params, x)
    }

    /// Puts the parameters on `tape`. With `trainable == false` they enter
    /// as constants and receive no gradient.
    pub fn param_vars(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let layers = self
            .params
            .layers
            .iter()
            .map(|layer| {
                if trainable {
                    (tape.leaf(layer.weight.clone()), tape.leaf(layer.bias.clone()))
                } else {
                    (tape.constant(layer.weight.clone()), tape.constant(layer.bias.clone()))
                }
            })
            .collect();
        ParamVars { layers }
    }

    /// Records the forward pass on `tape` using previously placed parameters.
    pub fn forward_with(&self, tape: &mut Tape, x: Var, vars: &ParamVars) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.spec.input_dim {
            return Err(Error::shape(
                format!("{} input", self.params.name),
                self.spec.input_dim,
                cols,
            ));
        }
        let mut h = x;
        for (l, &(w, b)) in vars.layers.iter().enumerate() {
            h = tape.affine(h, w, b)?;
            let act = self.spec.layer_activation(l);
            if act != Activation::Identity {
                h = tape.act(h, act);
            }
        }
        Ok(h)
    }

    /// [`Mlp::param_vars`] followed by [`Mlp::forward_with`].
    pub fn forward_tape(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<(Var, ParamVars)> {
        let vars = self.param_vars(tape, trainable);
        let out = self.forward_with(tape, x, &vars)?;
        Ok((out, vars))
    }

    /// Runs a forward pass on the tape, backpropagates `loss_of_output`,
    /// and returns the gradient with respect to the input rows.
    pub fn input_gradient(
        &self,
        x: &Matrix,
        loss_of_output: impl Fn(&mut Tape, Var) -> Result<Var>,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let (out, _) = self.forward_tape(&mut tape, xv, false)?;
        let loss = loss_of_output(&mut tape, out)?;
        let grads = tape.backward(loss)?;
        Ok(grads.get_or_zeros(xv, x.rows(), x.cols()))
    }
}

fn check_shapes(spec: &MlpSpec, params: &ParamBlock) -> Result<()> {
    let expected = spec.layer_shapes();
    let got = params.shapes();
    let bias_ok = params
        .layers
        .iter()
        .all(|l| l.bias.rows() == 1 && l.bias.cols() == l.weight.rows());
    if expected != got || !bias_ok {
        return Err(Error::shape(
            format!("parameters of {}", params.name),
            format!("{expected:?}"),
            format!("{got:?}"),
        ));
    }
    Ok(())
}

/// Single-sample forward pass.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamBlock, x: &[f64]) -> Result<Vec<f64>> {
    let out = mlp_forward_batch(spec, params, &Matrix::row_vector(x))?;
    Ok(out.into_vec())
}

/// Batched forward pass, one sample per row.
pub fn mlp_forward_batch(spec: &MlpSpec, params: &ParamBlock, x: &Matrix) -> Result<Matrix> {
    if x.cols() != spec.input_dim {
        return Err(Error::shape(format!("{} input", params.name), spec.input_dim, x.cols()));
    }
    if params.layers.len() != spec.hidden_dims.len() + 1 {
        return Err(Error::shape(
            format!("{} layer count", params.name),
            spec.hidden_dims.len() + 1,
            params.layers.len(),
        ));
    }
    let mut h = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        if layer.weight.cols() != h.cols() {
            return Err(Error::shape(
                format!("{} layer {l}", params.name),
                layer.weight.cols(),
                h.cols(),
            ));
        }
        h = Matrix::affine(&h, &layer.weight, &layer.bias);
        let act = spec.layer_activation(l);
        if act != Activation::Identity {
            h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
    }
    Ok(h)
}
