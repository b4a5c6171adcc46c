//! Dense row-major matrices of `f64`.
//!
//! Everything in the network core is a 2-D matrix: a single sample is a
//! `1 × n` row, a batch is `batch × n`, a bias is `1 × out`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!("Matrix::from_rows row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`, shapes must agree.
    pub fn add_scaled(&mut self, other: &Matrix, alpha: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Concatenates two matrices with the same row count along columns.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape("Matrix::hcat rows", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Copies columns `start..start + len`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + len]);
        }
        out
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let cols = parts.first().map(|m| m.cols).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::shape("Matrix::vstack cols", cols, p.cols));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// `x · wᵀ + b` for `x: n×i`, `w: o×i`, `b: 1×o`.
    pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
        debug_assert_eq!(x.cols, w.cols);
        debug_assert_eq!(b.cols, w.rows);
        let (n, i_dim, o_dim) = (x.rows, x.cols, w.rows);
        let mut data = Vec::with_capacity(n * o_dim);
        for _ in 0..n {
            data.extend_from_slice(&b.data);
        }
        let mut out = Matrix { rows: n, cols: o_dim, data };
        gemm(n, i_dim, o_dim, x, (i_dim, 1), w, (1, i_dim), 1.0, &mut out);
        out
    }

    /// Plain matrix product `a · b`.
    pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
        debug_assert_eq!(a.cols, b.rows);
        product(a.rows, a.cols, b.cols, a, (a.cols, 1), b, (b.cols, 1))
    }

    /// `aᵀ · b` without forming the transpose.
    pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
        debug_assert_eq!(a.rows, b.rows);
        product(a.cols, a.rows, b.cols, a, (1, a.cols), b, (b.cols, 1))
    }
}

fn check_operands(m: usize, k: usize, n: usize, a: &Matrix, sa: (usize, usize), b: &Matrix, sb: (usize, usize)) {
    assert!((m - 1) * sa.0 + (k - 1) * sa.1 < a.data.len());
    assert!((k - 1) * sb.0 + (n - 1) * sb.1 < b.data.len());
}

/// `c ← A·B + beta·c` with `A: m×k` and `B: k×n` given by (row, column)
/// strides into the operands' storage; `c` is a dense `m×n` matrix.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &Matrix, sa: (usize, usize), b: &Matrix, sb: (usize, usize), beta: f64, c: &mut Matrix) {
    assert_eq!(c.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    check_operands(m, k, n, a, sa, b, sb);
    // SAFETY: the asserts above bound every index the kernel touches, and
    // `c` is a distinct, exclusively borrowed dense buffer of size m×n.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.data.as_ptr(), sa.0 as isize, sa.1 as isize, b.data.as_ptr(), sb.0 as isize, sb.1 as isize, beta, c.data.as_mut_ptr(), n as isize, 1);
    }
}

/// Fresh `A·B` written straight into unfilled storage.
fn product(m: usize, k: usize, n: usize, a: &Matrix, sa: (usize, usize), b: &Matrix, sb: (usize, usize)) -> Matrix {
    if m == 0 || n == 0 || k == 0 {
        return Matrix::zeros(m, n);
    }
    check_operands(m, k, n, a, sa, b, sb);
    let mut data: Vec<f64> = Vec::with_capacity(m * n);
    // SAFETY: operand bounds are asserted above; the output pointer covers
    // m×n reserved slots, and with beta = 0 the kernel writes every slot of
    // C without reading it, so all m×n values are initialized before
    // `set_len`.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.data.as_ptr(), sa.0 as isize, sa.1 as isize, b.data.as_ptr(), sb.0 as isize, sb.1 as isize, 0.0, data.spare_capacity_mut().as_mut_ptr().cast::<f64>(), n as isize, 1);
        data.set_len(m * n);
    }
    Matrix { rows: m, cols: n, data }
}
