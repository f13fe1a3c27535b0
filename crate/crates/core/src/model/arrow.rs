//! Cholesky factorization for symmetric positive-definite matrices with
//! "arrowhead" structure:
//!
//! ```text
//! Q = | A   B |   A: n x n tridiagonal (the week-level random walk)
//!     | B'  C |   B: n x k dense border, C: k x k dense corner
//! ```
//!
//! With `A = L L'`, `W = L^{-1} B` and `C - W'W = M M'`, the full factor is
//! `[[L, 0], [W', M]]`. Everything costs `O(n k^2 + k^3)`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ArrowMatrix {
    /// Diagonal of `A`.
    pub diag: Vec<f64>,
    /// Sub-diagonal of `A`: `off[i] = A[i + 1, i]`.
    pub off: Vec<f64>,
    pub border: DMatrix<f64>,
    pub corner: DMatrix<f64>,
}

impl ArrowMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
            border: DMatrix::zeros(n, k),
            corner: DMatrix::zeros(k, k),
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn k(&self) -> usize {
        self.corner.nrows()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let (n, k) = (self.n(), self.k());
        let mut q = DMatrix::zeros(n + k, n + k);
        for i in 0..n {
            q[(i, i)] = self.diag[i];
            if i + 1 < n {
                q[(i + 1, i)] = self.off[i];
                q[(i, i + 1)] = self.off[i];
            }
            for j in 0..k {
                q[(i, n + j)] = self.border[(i, j)];
                q[(n + j, i)] = self.border[(i, j)];
            }
        }
        q.view_mut((n, n), (k, k)).copy_from(&self.corner);
        q
    }

    /// `Q x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let (n, k) = (self.n(), self.k());
        let mut y = vec![0.0; n + k];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * x[i + 1];
            }
            for j in 0..k {
                v += self.border[(i, j)] * x[n + j];
            }
            y[i] = v;
        }
        for j in 0..k {
            let mut v = 0.0;
            for i in 0..n {
                v += self.border[(i, j)] * x[i];
            }
            for l in 0..k {
                v += self.corner[(j, l)] * x[n + l];
            }
            y[n + j] = v;
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct ArrowCholesky {
    l_diag: Vec<f64>,
    l_off: Vec<f64>,
    w: DMatrix<f64>,
    m: DMatrix<f64>,
}

impl ArrowCholesky {
    /// Factor `q`; `None` if it is not numerically positive definite.
    pub fn new(q: &ArrowMatrix) -> Option<Self> {
        let (n, k) = (q.n(), q.k());
        let mut l_diag = vec![0.0; n];
        let mut l_off = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut d = q.diag[i];
            if i > 0 {
                d -= l_off[i - 1] * l_off[i - 1];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            l_diag[i] = d.sqrt();
            if i + 1 < n {
                l_off[i] = q.off[i] / l_diag[i];
            }
        }
        let mut w = q.border.clone();
        for j in 0..k {
            let mut col = w.column_mut(j);
            forward_bidiagonal(&l_diag, &l_off, col.as_mut_slice());
        }
        let schur = &q.corner - w.transpose() * &w;
        let chol = nalgebra::linalg::Cholesky::new(schur)?;
        let m = chol.l();
        if m.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return None;
        }
        Some(Self { l_diag, l_off, w, m })
    }

    pub fn n(&self) -> usize {
        self.l_diag.len()
    }

    pub fn k(&self) -> usize {
        self.m.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (self.l_diag.iter().map(|d| d.ln()).sum::<f64>()
            + self.m.diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    /// Solve `Q x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y1 = rhs[..n].to_vec();
        forward_bidiagonal(&self.l_diag, &self.l_off, &mut y1);
        let r2 = DVector::from_column_slice(&rhs[n..]);
        let y2 = r2 - self.w.transpose() * DVector::from_column_slice(&y1);
        let y2 = self
            .m
            .solve_lower_triangular(&y2)
            .expect("positive diagonal");
        self.back_substitute(y1, y2)
    }

    /// Solve `F' x = z` where `F` is the full lower factor. If `z` is standard
    /// normal, `x` has covariance `Q^{-1}`.
    pub fn solve_factor_transpose(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        self.back_substitute(z[..n].to_vec(), DVector::from_column_slice(&z[n..]))
    }

    fn back_substitute(&self, y1: Vec<f64>, y2: DVector<f64>) -> Vec<f64> {
        let x2 = self
            .m
            .tr_solve_lower_triangular(&y2)
            .expect("positive diagonal");
        let wx2 = &self.w * &x2;
        let mut x1: Vec<f64> = y1.iter().zip(wx2.iter()).map(|(a, b)| a - b).collect();
        backward_bidiagonal(&self.l_diag, &self.l_off, &mut x1);
        x1.extend(x2.iter());
        x1
    }
}

/// In-place solve of `L y = r` for lower-bidiagonal `L`.
fn forward_bidiagonal(diag: &[f64], off: &[f64], r: &mut [f64]) {
    for i in 0..diag.len() {
        if i > 0 {
            r[i] -= off[i - 1] * r[i - 1];
        }
        r[i] /= diag[i];
    }
}

/// In-place solve of `L' x = y` for lower-bidiagonal `L`.
fn backward_bidiagonal(diag: &[f64], off: &[f64], y: &mut [f64]) {
    for i in (0..diag.len()).rev() {
        if i + 1 < diag.len() {
            y[i] -= off[i] * y[i + 1];
        }
        y[i] /= diag[i];
    }
}
