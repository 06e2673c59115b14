use num_complex::Complex64;
use thiserror::Error;

use super::{complement, eigenvalues, hstack, is_schur, orth, pinv, rank_or_zero, singular_values, Matrix, NumericsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilizeError {
    /// Modes of `A0` with `|λ| >= 1` that no choice of `W` can move.
    #[error("no stabilizing W: fixed unstable eigenvalue(s) {eigenvalues:?}")]
    Infeasible { eigenvalues: Vec<Complex64> },
    /// The pair was stabilizable but every candidate gain failed the
    /// post-hoc Schur check.
    #[error("stabilizing gain failed verification (best spectral radius {spectral_radius})")]
    VerificationFailed { spectral_radius: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

const CONTROLLABILITY_RTOL: f64 = 1e-9;
/// Target radii tried in order for the reachable part of the spectrum.
const TARGET_RADII: [f64; 3] = [0.5, 0.7, 0.9];

/// Finds `W` with `A0 + W*G` Schur stable.
///
/// Order of attempts: `W = 0`; `W = -A0 G^+` when `G` has full column rank
/// (every eigenvalue moves to zero); otherwise a controllability split of the
/// transposed pair `(A0^T, G^T)` followed by a discrete Riccati gain that
/// pulls the reachable modes inside radius 0.5. Every returned `W` has passed
/// [`is_schur`].
pub fn stabilize_pair(a0: &Matrix, g: &Matrix) -> Result<Matrix, StabilizeError> {
    let k = a0.nrows();
    if a0.ncols() != k {
        return Err(NumericsError::NotSquare {
            rows: k,
            cols: a0.ncols(),
        }
        .into());
    }
    if g.ncols() != k {
        return Err(NumericsError::Dimension(format!(
            "stabilize_pair: G has {} columns, A0 is {k}x{k}",
            g.ncols()
        ))
        .into());
    }
    let r = g.nrows();
    if is_schur(a0, 0.0)?.0 {
        return Ok(Matrix::zeros(k, r));
    }

    let scale = [1.0, spectral_norm(a0), spectral_norm(g)]
        .into_iter()
        .fold(0.0, f64::max);
    let tol = CONTROLLABILITY_RTOL * scale;

    if r > 0 && rank_or_zero(g, Some(CONTROLLABILITY_RTOL)) == k && singular_values(g)[k - 1] > tol {
        let w = -(a0 * pinv(g));
        let (ok, rho) = is_schur(&(a0 + &w * g), 0.0)?;
        if ok {
            return Ok(w);
        }
        return Err(StabilizeError::VerificationFailed { spectral_radius: rho });
    }

    // Dual problem: A = A0^T, B = G^T, gain K = W^T.
    let a = a0.transpose();
    let b = g.transpose();
    let reach = controllable_subspace(&a, &b, tol)?;
    let unreach = complement(&reach, k);

    let au = unreach.transpose() * &a * &unreach;
    let fixed: Vec<Complex64> = eigenvalues(&au)?
        .into_iter()
        .filter(|l| l.norm() >= 1.0)
        .collect();
    if !fixed.is_empty() {
        return Err(StabilizeError::Infeasible { eigenvalues: fixed });
    }

    let ac = reach.transpose() * &a * &reach;
    let bc = reach.transpose() * &b;
    let mut best = f64::INFINITY;
    for alpha in TARGET_RADII {
        let Some(kc) = dlqr(&(&ac / alpha), &(&bc / alpha)) else {
            continue;
        };
        let gain = kc * reach.transpose();
        let w = gain.transpose();
        let (ok, rho) = is_schur(&(a0 + &w * g), 0.0)?;
        if ok {
            return Ok(w);
        }
        best = best.min(rho);
    }
    Err(StabilizeError::VerificationFailed { spectral_radius: best })
}

fn spectral_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of `span[B, AB, A^2 B, ...]`.
fn controllable_subspace(a: &Matrix, b: &Matrix, tol: f64) -> Result<Matrix, NumericsError> {
    let n = a.nrows();
    let mut basis = orth(b, tol);
    loop {
        if basis.ncols() == n || basis.ncols() == 0 {
            return Ok(basis);
        }
        let grown = orth(&hstack(&[&basis, &(a * &basis)])?, tol);
        if grown.ncols() == basis.ncols() {
            return Ok(basis);
        }
        basis = grown;
    }
}

/// Infinite-horizon discrete LQR gain with `Q = I`, `R = I`, such that
/// `A + B K` is Schur for a stabilizable `(A, B)`.
///
/// The Riccati solution comes from the structure-preserving doubling
/// iteration, which converges quadratically.
fn dlqr(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let m = b.ncols();
    let eye = Matrix::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * b.transpose();
    let mut hk = Matrix::identity(n, n);
    for _ in 0..200 {
        let w = (&eye + &gk * &hk).try_inverse()?;
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let delta = (&h_next - &hk).norm();
        let size = h_next.norm();
        ak = a_next;
        gk = (&g_next + g_next.transpose()) * 0.5;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if !size.is_finite() {
            return None;
        }
        if delta <= 1e-13 * size {
            break;
        }
    }
    let p = hk;
    let btp = b.transpose() * &p;
    let lhs = Matrix::identity(m, m) + &btp * b;
    let k = -(lhs.try_inverse()? * btp * a);
    Some(k)
}
