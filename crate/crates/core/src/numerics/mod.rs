//! Dense linear-algebra primitives shared by the model-based and data-driven
//! design paths.
//!
//! Every rank decision is relative to the largest singular value of the matrix
//! being tested, so callers can pass a single `rtol` regardless of data scale.

mod pencil;
mod stabilize;
mod svd;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use thiserror::Error;

pub use pencil::{pencil_unstable_zeros, weakly_unobservable_restriction, PencilZeros};
pub use stabilize::{stabilize_pair, StabilizeError};
use svd::thin_svd;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is empty ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("eigenvalue iteration failed to converge")]
    NoConvergence,
    #[error("pencil normal rank {normal_rank} is below n+q = {required}; rank condition fails for every z")]
    DegeneratePencil { normal_rank: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Outcome of a singular-value rank test.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// Sorted in descending order.
    pub singular_values: Vec<f64>,
    /// Absolute threshold a singular value had to exceed to be counted.
    pub tolerance_used: f64,
}

impl RankReport {
    /// Smallest singular value that was counted towards the rank.
    pub fn smallest_retained(&self) -> Option<f64> {
        if self.rank == 0 {
            None
        } else {
            Some(self.singular_values[self.rank - 1])
        }
    }

    /// Largest singular value that fell below the threshold.
    pub fn largest_discarded(&self) -> Option<f64> {
        self.singular_values.get(self.rank).copied()
    }
}

/// Default relative tolerance for a matrix of the given shape.
pub fn default_rtol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON
}

/// Rejects matrices carrying NaN or infinite entries.
pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(NumericsError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Builds a matrix from row-major nested rows, checking shape and finiteness.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Matrix> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(NumericsError::Dimension(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    let m = Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Descending singular values; empty matrices have none.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    thin_svd(m).s
}

/// Numerical rank: number of singular values above `rtol * sigma_max`.
///
/// `rtol = None` uses `max(rows, cols) * eps`.
pub fn rank_svd(m: &Matrix, rtol: Option<f64>) -> Result<RankReport> {
    if m.is_empty() {
        return Err(NumericsError::Empty {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let rtol = rtol.unwrap_or_else(|| default_rtol(m.nrows(), m.ncols()));
    let singular_values = singular_values(m);
    let tolerance_used = rtol * singular_values[0];
    let rank = singular_values
        .iter()
        .filter(|&&s| s > tolerance_used)
        .count();
    Ok(RankReport {
        rank,
        singular_values,
        tolerance_used,
    })
}

/// Rank that treats empty matrices as rank zero instead of an error.
pub(crate) fn rank_or_zero(m: &Matrix, rtol: Option<f64>) -> usize {
    rank_svd(m, rtol).map(|r| r.rank).unwrap_or(0)
}

/// Moore-Penrose pseudoinverse with the default relative cutoff.
pub fn pinv(m: &Matrix) -> Matrix {
    pinv_with_rtol(m, default_rtol(m.nrows(), m.ncols()))
}

/// Moore-Penrose pseudoinverse, dropping singular values below
/// `rtol * sigma_max`.
pub fn pinv_with_rtol(m: &Matrix, rtol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return Matrix::zeros(cols, rows);
    }
    let f = thin_svd(m);
    let cutoff = rtol * f.s.first().copied().unwrap_or(0.0);
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in f.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += f.v.column(k) * f.u.column(k).transpose() / s;
        }
    }
    out
}

/// Stacks matrices vertically. All inputs must share a column count.
pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if let Some(b) = blocks.iter().find(|b| b.ncols() != cols) {
        return Err(NumericsError::Dimension(format!(
            "vstack: {} columns vs {cols}",
            b.ncols()
        )));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}

/// Concatenates matrices horizontally. All inputs must share a row count.
pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if let Some(b) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(NumericsError::Dimension(format!(
            "hstack: {} rows vs {rows}",
            b.nrows()
        )));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    Ok(out)
}

/// `true` iff every row of `lower` lies in the row space of `upper`, i.e.
/// `ker(upper) ⊆ ker(lower)`. Tested as `rank([upper; lower]) == rank(upper)`.
pub fn row_space_included(upper: &Matrix, lower: &Matrix, rtol: Option<f64>) -> Result<bool> {
    if upper.ncols() != lower.ncols() {
        return Err(NumericsError::Dimension(format!(
            "row_space_included: upper has {} columns, lower has {}",
            upper.ncols(),
            lower.ncols()
        )));
    }
    if lower.nrows() == 0 {
        return Ok(true);
    }
    let stacked = vstack(&[upper, lower])?;
    if stacked.is_empty() {
        return Ok(true);
    }
    let rtol = rtol.unwrap_or_else(|| default_rtol(stacked.nrows(), stacked.ncols()));
    // Both ranks share the absolute threshold of the stacked matrix so a
    // tiny `upper` cannot be judged against its own (smaller) scale.
    let sv_all = singular_values(&stacked);
    let thresh = rtol * sv_all[0];
    let rank_all = sv_all.iter().filter(|&&s| s > thresh).count();
    let rank_upper = singular_values(upper)
        .iter()
        .filter(|&&s| s > thresh)
        .count();
    Ok(rank_all == rank_upper)
}

/// Eigenvalues of a square real matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or(NumericsError::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus; zero for a 0x0 matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Schur stability test: `spectral_radius < 1 - margin`.
pub fn is_schur(m: &Matrix, margin: f64) -> Result<(bool, f64)> {
    let rho = spectral_radius(m)?;
    Ok((rho < 1.0 - margin, rho))
}

/// Orthonormal basis of the column space, keeping directions whose singular
/// value exceeds `abs_tol`.
pub(crate) fn orth(m: &Matrix, abs_tol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(rows, 0);
    }
    let f = thin_svd(m);
    let keep = f.s.iter().take_while(|&&s| s > abs_tol).count();
    f.u.columns(0, keep).into_owned()
}

/// Orthonormal basis of the kernel, treating singular values at or below
/// `abs_tol` as zero.
pub(crate) fn null_space(m: &Matrix, abs_tol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    if rows == 0 {
        return Matrix::identity(cols, cols);
    }
    let f = thin_svd(m);
    let keep = f.s.iter().take_while(|&&s| s > abs_tol).count();
    complement(&f.v.columns(0, keep).into_owned(), cols)
}

/// Orthonormal basis of the orthogonal complement of `span(q)`, where `q`
/// has orthonormal columns.
pub(crate) fn complement(q: &Matrix, dim: usize) -> Matrix {
    if q.ncols() == 0 {
        return Matrix::identity(dim, dim);
    }
    // I - Q Q^T has singular values 1 on the complement and 0 on span(Q)
    let projector = Matrix::identity(dim, dim) - q * q.transpose();
    orth(&projector, 0.5)
}

/// Frobenius norm of `a - b` relative to `scale` (floored at one).
pub fn relative_residual(diff: &Matrix, scale: f64) -> f64 {
    diff.norm() / scale.max(1.0)
}
