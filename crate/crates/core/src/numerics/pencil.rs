use num_complex::Complex64;

use super::{complement, eigenvalues, hstack, null_space, orth, pinv, rank_or_zero, Matrix, NumericsError, Result};

/// Finite zeros of the Rosenbrock pencil `[zI - A, -E; C, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilZeros {
    /// Every finite zero, in the order the eigen-solver returned them.
    pub all: Vec<Complex64>,
    /// Zeros with `|z| >= 1`; empty means the rank condition holds on and
    /// outside the unit circle.
    pub unstable: Vec<Complex64>,
}

const SUBSPACE_RTOL: f64 = 1e-9;

fn scale_of(a: &Matrix, e: &Matrix, c: &Matrix) -> f64 {
    [a.norm(), e.norm(), c.norm(), 1.0]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Restriction of the zero dynamics to the largest output-nulling
/// controlled-invariant subspace of `(A, E, C)`.
///
/// Returns `(basis, restriction)` where `basis` spans the subspace and
/// `A*basis + E*F = basis*restriction` for some `F`. The eigenvalues of the
/// restriction are exactly the finite points where the pencil
/// `[zI - A, -E; C, 0]` drops below full column rank `n + q`.
pub fn weakly_unobservable_restriction(a: &Matrix, e: &Matrix, c: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    if a.ncols() != n || e.nrows() != n || c.ncols() != n {
        return Err(NumericsError::Dimension(format!(
            "pencil: A {:?}, E {:?}, C {:?}",
            a.shape(),
            e.shape(),
            c.shape()
        )));
    }
    let q = e.ncols();
    let tol = SUBSPACE_RTOL * scale_of(a, e, c);

    if q > 0 && rank_or_zero(e, Some(SUBSPACE_RTOL)) < q {
        return Err(NumericsError::DegeneratePencil {
            normal_rank: n + rank_or_zero(e, Some(SUBSPACE_RTOL)),
            required: n + q,
        });
    }

    // V_0 = R^n, V_{k+1} = ker C ∩ A^{-1}(V_k + im E); nested, so it stops
    // as soon as the dimension stalls.
    let mut v = Matrix::identity(n, n);
    loop {
        let sum = orth(&hstack(&[&v, e])?, tol);
        let perp = complement(&sum, n);
        let constraint = if perp.ncols() == 0 {
            c.clone()
        } else {
            super::vstack(&[c, &(perp.transpose() * a)])?
        };
        let next = null_space(&constraint, tol);
        if next.ncols() == v.ncols() {
            v = next;
            break;
        }
        v = next;
        if v.ncols() == 0 {
            break;
        }
    }

    let k = v.ncols();
    // Left invertibility: V* ∩ im E = 0, otherwise the normal rank is short.
    let joint = hstack(&[&v, e])?;
    let joint_rank = if joint.ncols() == 0 {
        0
    } else {
        orth(&joint, tol).ncols()
    };
    if joint_rank < k + q {
        return Err(NumericsError::DegeneratePencil {
            normal_rank: n + q - (k + q - joint_rank),
            required: n + q,
        });
    }
    if k == 0 {
        return Ok((v, Matrix::zeros(0, 0)));
    }

    // Solve [V | -E] [X; G] = A V; the stacked operator has full column rank.
    let lhs = hstack(&[&v, &(-e)])?;
    let sol = pinv(&lhs) * (a * &v);
    let restriction = sol.rows(0, k).into_owned();
    Ok((v, restriction))
}

/// Zeros of the pencil `[zI - A, -E; C, 0]` with `|z| >= 1`.
///
/// Fails with [`NumericsError::DegeneratePencil`] when the pencil never
/// reaches full column rank `n + q`, which means the rank condition is
/// violated at every `z`.
pub fn pencil_unstable_zeros(a: &Matrix, e: &Matrix, c: &Matrix) -> Result<PencilZeros> {
    let (_, restriction) = weakly_unobservable_restriction(a, e, c)?;
    let all = eigenvalues(&restriction)?;
    let unstable = all.iter().copied().filter(|z| z.norm() >= 1.0).collect();
    Ok(PencilZeros { all, unstable })
}
