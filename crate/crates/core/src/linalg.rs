//! Small dense helpers shared by the pursuit algorithms.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result};

pub(crate) fn cholesky(a: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `log det(A)` from a Cholesky factor of `A`.
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Lower-triangular factor of a symmetric positive-definite matrix that grows
/// one row/column at a time.
///
/// Adding a column costs one forward substitution, so a greedy pursuit that
/// builds a k-atom support pays O(k^2) per candidate instead of refactoring.
#[derive(Debug, Clone, Default)]
pub(crate) struct IncrementalCholesky {
    // row-major lower triangle, row i has i+1 entries
    rows: Vec<Vec<f64>>,
}

impl IncrementalCholesky {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Solve `L w = b` for `w`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.dim());
        let mut w = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = b[i];
            for (j, wj) in w.iter().enumerate() {
                acc -= row[j] * wj;
            }
            w.push(acc / row[i]);
        }
        w
    }

    /// Solve `Lᵀ x = w` for `x`.
    pub fn backward(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = w[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                acc -= self.rows[j][i] * xj;
            }
            x[i] = acc / self.rows[i][i];
        }
        x
    }

    /// Solve `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// Compute the new factor row for a column with cross terms `cross` and
    /// diagonal `diag`, without committing it. Returns `(row, pivot)`;
    /// `pivot²` is the Schur complement and must be positive.
    pub fn propose(&self, cross: &[f64], diag: f64) -> (Vec<f64>, f64) {
        let w = self.forward(cross);
        let schur = diag - w.iter().map(|v| v * v).sum::<f64>();
        (w, schur)
    }

    /// Append a row computed by [`propose`](Self::propose).
    pub fn push(&mut self, mut row: Vec<f64>, schur: f64) {
        row.push(schur.sqrt());
        self.rows.push(row);
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.rows.iter().enumerate().map(|(i, r)| r[i].ln()).sum::<f64>()
    }
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
