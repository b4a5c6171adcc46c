//! Largest singular value by power iteration.

use super::tensor::Matrix;

/// Estimate of the top singular triple `W v ≈ σ u`.
#[derive(Clone, Debug)]
pub struct TopSingular {
    pub sigma: f64,
    /// Left singular vector (length = rows).
    pub u: Vec<f64>,
    /// Right singular vector (length = cols).
    pub v: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn mat_vec(w: &Matrix, v: &[f64]) -> Vec<f64> {
    w.iter_rows()
        .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn mat_t_vec(w: &Matrix, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &uv) in w.iter_rows().zip(u) {
        for (o, a) in out.iter_mut().zip(r) {
            *o += a * uv;
        }
    }
    out
}

/// Power iteration on `WᵀW`, started from the unit vector of the column
/// with the largest norm. The estimate is nondecreasing in `iters`, never
/// below the largest column norm and never above the Frobenius norm.
/// An all-zero matrix yields `sigma = 0`.
pub fn top_singular(w: &Matrix, iters: usize) -> TopSingular {
    let (rows, cols) = w.shape();
    let mut best_col = 0;
    let mut best_norm = -1.0;
    for c in 0..cols {
        let n: f64 = (0..rows).map(|r| w.get(r, c).powi(2)).sum();
        if n > best_norm {
            best_norm = n;
            best_col = c;
        }
    }
    let mut v = vec![0.0; cols];
    if cols > 0 {
        v[best_col] = 1.0;
    }
    let mut u = mat_vec(w, &v);
    let mut sigma = norm(&u);
    if sigma == 0.0 {
        return TopSingular { sigma: 0.0, u: vec![0.0; rows], v };
    }
    for _ in 0..iters {
        let next = mat_t_vec(w, &u);
        let n = norm(&next);
        if n == 0.0 {
            break;
        }
        v = next.into_iter().map(|x| x / n).collect();
        u = mat_vec(w, &v);
        sigma = norm(&u);
    }
    u.iter_mut().for_each(|x| *x /= sigma);
    TopSingular { sigma, u, v }
}

pub fn spectral_norm(w: &Matrix, iters: usize) -> f64 {
    top_singular(w, iters).sigma
}

/// `∂σ/∂W = u vᵀ` for the estimated top singular pair.
pub fn spectral_norm_grad(top: &TopSingular) -> Matrix {
    let mut g = Matrix::zeros(top.u.len(), top.v.len());
    for (r, &uv) in top.u.iter().enumerate() {
        for (c, &vv) in top.v.iter().enumerate() {
            g.set(r, c, uv * vv);
        }
    }
    g
}
