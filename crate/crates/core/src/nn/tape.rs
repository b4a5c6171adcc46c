//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records a straight-line program built from a fixed set of
//! primitives (affine maps, activations, elementwise arithmetic, reductions,
//! softmax and Gaussian log-densities). [`Tape::backward`] walks the record
//! in reverse and returns a [`Grads`] table indexed by [`Var`].
//!
//! Nodes created with [`Tape::constant`] never receive gradients, which is
//! how a network is frozen inside another network's loss.

use super::activation::Activation;
use super::tensor::Matrix;
use crate::error::{Error, Result};

use super::sampling::LN_2PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Act { x: Var, act: Activation },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a + s` where `s` is a `1×1` node broadcast over `a`.
    AddScalarNode(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Square(Var),
    Abs(Var),
    Log(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ColMean(Var),
    Concat(Var, Var),
    Slice(Var, usize),
    LogSoftmax(Var),
    Softmax(Var),
    Pick(Var, Vec<usize>),
    GroupMeanRows(Var, usize),
    RepeatRows(Var, usize),
    GaussLogDensity { x: Var, mean: Var, log_var: Var },
    /// Value-only node. Reaching it with a gradient is an error.
    Opaque(&'static str),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], one slot per node.
pub struct Grads {
    grads: Vec<Option<Matrix>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, a: Var, b: Var, ctx: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(ctx, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows() {
            return Err(Error::shape(
                "affine",
                format!("x(_x{}) w({}x{}) b(1x{})", wv.cols(), wv.rows(), wv.cols(), wv.rows()),
                format!(
                    "x({}x{}) w({}x{}) b({}x{})",
                    xv.rows(),
                    xv.cols(),
                    wv.rows(),
                    wv.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let out = Matrix::affine(xv, wv, bv);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, Op::Affine { x, w, b }, rg))
    }

    pub fn act(&mut self, x: Var, act: Activation) -> Var {
        let out = self.value(x).map(|v| act.apply(v));
        let rg = self.rg(x);
        self.push(out, Op::Act { x, act }, rg)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(av.rows(), av.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `a + s` with `s` a `1×1` node.
    pub fn add_scalar_node(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::shape("add_scalar_node", "(1, 1)", format!("{:?}", self.value(s).shape())));
        }
        let sv = self.scalar(s);
        let out = self.value(a).map(|v| v + sv);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::AddScalarNode(a, s), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(out, Op::Offset(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let rg = self.rg(a);
        self.push(out, Op::Abs(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    /// Elementwise clamp; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(out, Op::Clamp(a, lo, hi), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let n = (m.rows() * m.cols()).max(1) as f64;
        let out = Matrix::scalar(m.sum() / n);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// `n×m → n×1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = m.iter_rows().map(|r| r.iter().sum()).collect();
        let out = Matrix::from_vec(m.rows(), 1, data).expect("row sums");
        let rg = self.rg(a);
        self.push(out, Op::RowSum(a), rg)
    }

    /// `n×m → 1×m`.
    pub fn col_mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(1, m.cols());
        let inv = 1.0 / m.rows().max(1) as f64;
        for r in m.iter_rows() {
            for (o, v) in out.data_mut().iter_mut().zip(r) {
                *o += v * inv;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ColMean(a), rg)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hcat(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(a);
        if start + len > m.cols() {
            return Err(Error::shape("slice", format!("<= {} cols", m.cols()), start + len));
        }
        let out = m.slice_cols(start, len);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Slice(a, start), rg))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = m.clone();
        for r in 0..m.rows() {
            let row = out.row_mut(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = m.clone();
        for r in 0..m.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Picks one column per row: `out[r] = a[r, idx[r]]`, shape `n×1`.
    pub fn pick(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let m = self.value(a);
        if idx.len() != m.rows() {
            return Err(Error::shape("pick", m.rows(), idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= m.cols()) {
            return Err(Error::shape("pick index", format!("< {}", m.cols()), bad));
        }
        let data = idx.iter().enumerate().map(|(r, &c)| m.get(r, c)).collect();
        let out = Matrix::from_vec(m.rows(), 1, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Pick(a, idx), rg))
    }

    /// Means of consecutive groups of `group` rows: `(g·group)×c → g×c`.
    pub fn group_mean_rows(&mut self, a: Var, group: usize) -> Result<Var> {
        let m = self.value(a);
        if group == 0 || m.rows() % group != 0 {
            return Err(Error::shape("group_mean_rows", format!("multiple of {group} rows"), m.rows()));
        }
        let groups = m.rows() / group;
        let mut out = Matrix::zeros(groups, m.cols());
        let inv = 1.0 / group as f64;
        for (r, row) in m.iter_rows().enumerate() {
            for (o, v) in out.row_mut(r / group).iter_mut().zip(row) {
                *o += v * inv;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::GroupMeanRows(a, group), rg))
    }

    /// Repeats every row `n` times consecutively: `r×c → (r·n)×c`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows() * n, m.cols());
        for (r, row) in m.iter_rows().enumerate() {
            for j in 0..n {
                out.row_mut(r * n + j).copy_from_slice(row);
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RepeatRows(a, n), rg)
    }

    /// Diagonal Gaussian log-density summed over columns, shape `n×1`.
    pub fn gaussian_log_density(&mut self, x: Var, mean: Var, log_var: Var) -> Result<Var> {
        self.same_shape(x, mean, "gaussian_log_density mean")?;
        self.same_shape(x, log_var, "gaussian_log_density log_var")?;
        let (xv, mv, lv) = (self.value(x), self.value(mean), self.value(log_var));
        let mut data = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let mut acc = 0.0;
            for ((&xi, &mi), &li) in xv.row(r).iter().zip(mv.row(r)).zip(lv.row(r)) {
                let d = xi - mi;
                acc += -0.5 * (li + LN_2PI + d * d * (-li).exp());
            }
            data.push(acc);
        }
        let out = Matrix::from_vec(xv.rows(), 1, data)?;
        let rg = self.rg(x) || self.rg(mean) || self.rg(log_var);
        Ok(self.push(out, Op::GaussLogDensity { x, mean, log_var }, rg))
    }

    /// Elementwise sign. Not differentiable: a gradient reaching this node
    /// makes [`Tape::backward`] fail.
    pub fn sign(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sign);
        let rg = self.rg(a);
        self.push(out, Op::Opaque("sign"), rg)
    }

    /// Reverse accumulation from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("backward: loss must be scalar", "(1, 1)", format!("{:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    if self.rg(*x) {
                        // dX = G · W
                        accumulate(&mut grads, *x, Matrix::matmul(&g, wv));
                    }
                    if self.rg(*w) {
                        // dW = Gᵀ · X
                        let dw = Matrix::matmul_tn(&g, xv);
                        accumulate(&mut grads, *w, dw);
                    }
                    if self.rg(*b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in g.iter_rows() {
                            for (d, v) in db.data_mut().iter_mut().zip(r) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Act { x, act } => {
                    let xv = self.value(*x);
                    let d = elementwise(&g, xv, |gv, xi| gv * act.derivative(xi));
                    accumulate(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, elementwise(&g, self.value(*b), |x, y| x * y));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, elementwise(&g, self.value(*a), |x, y| x * y));
                    }
                }
                Op::AddScalarNode(a, s) => {
                    if self.rg(*s) {
                        accumulate(&mut grads, *s, Matrix::scalar(g.sum()));
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| v * c));
                }
                Op::Offset(a) => accumulate(&mut grads, *a, g),
                Op::Square(a) => {
                    let d = elementwise(&g, self.value(*a), |gv, x| 2.0 * x * gv);
                    accumulate(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let d = elementwise(&g, self.value(*a), |gv, x| sign(x) * gv);
                    accumulate(&mut grads, *a, d);
                }
                Op::Log(a) => {
                    let d = elementwise(&g, self.value(*a), |gv, x| gv / x);
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let d = elementwise(&g, &node.value, |gv, y| gv * y);
                    accumulate(&mut grads, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let d = elementwise(&g, self.value(*a), |gv, x| {
                        if x < lo || x > hi {
                            0.0
                        } else {
                            gv
                        }
                    });
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c).max(1) as f64;
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0] / n));
                }
                Op::RowSum(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        let gv = g.get(i, 0);
                        d.row_mut(i).iter_mut().for_each(|v| *v = gv);
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::ColMean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let inv = 1.0 / r.max(1) as f64;
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        for (dv, gv) in d.row_mut(i).iter_mut().zip(g.data()) {
                            *dv = gv * inv;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.slice_cols(0, ca));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.slice_cols(ca, cb));
                    }
                }
                Op::Slice(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::LogSoftmax(a) => {
                    // dx = g - softmax(x) * sum(g)
                    let y = &node.value;
                    let mut d = g.clone();
                    for r in 0..y.rows() {
                        let gs: f64 = g.row(r).iter().sum();
                        for (dv, yv) in d.row_mut(r).iter_mut().zip(y.row(r)) {
                            *dv -= yv.exp() * gs;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    // dx = y * (g - <g, y>)
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for ((dv, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *dv = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Pick(a, idx) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (i, &k) in idx.iter().enumerate() {
                        d.set(i, k, g.get(i, 0));
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::GroupMeanRows(a, group) => {
                    let (r, c) = self.value(*a).shape();
                    let inv = 1.0 / *group as f64;
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(i / group)) {
                            *dv = gv * inv;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::RepeatRows(a, n) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        for (dv, gv) in d.row_mut(i / n).iter_mut().zip(g.row(i)) {
                            *dv += gv;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::GaussLogDensity { x, mean, log_var } => {
                    let (xv, mv, lv) = (self.value(*x), self.value(*mean), self.value(*log_var));
                    let (r, c) = xv.shape();
                    let mut dx = Matrix::zeros(r, c);
                    let mut dl = Matrix::zeros(r, c);
                    for i in 0..r {
                        let gv = g.get(i, 0);
                        for j in 0..c {
                            let diff = xv.get(i, j) - mv.get(i, j);
                            let inv_var = (-lv.get(i, j)).exp();
                            dx.set(i, j, -gv * diff * inv_var);
                            dl.set(i, j, gv * (-0.5 + 0.5 * diff * diff * inv_var));
                        }
                    }
                    if self.rg(*mean) {
                        accumulate(&mut grads, *mean, dx.map(|v| -v));
                    }
                    if self.rg(*x) {
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.rg(*log_var) {
                        accumulate(&mut grads, *log_var, dl);
                    }
                }
                Op::Opaque(name) => {
                    if g.data().iter().any(|&v| v != 0.0) {
                        return Err(Error::Unsupported(format!(
                            "gradient reached non-differentiable primitive `{name}`"
                        )));
                    }
                }
            }
        }
        Ok(Grads { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_scaled(&d, 1.0),
        slot @ None => *slot = Some(d),
    }
}

fn elementwise(g: &Matrix, x: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Matrix::from_vec(g.rows(), g.cols(), data).expect("same shape")
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
