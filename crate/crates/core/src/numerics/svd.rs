//! Thin SVD with a verified result.
//!
//! nalgebra's bidiagonal SVD occasionally returns factors that do not
//! reconstruct the input when the matrix has exact zero rows (seen with
//! nalgebra 0.35). Every factorization is therefore checked; on failure the
//! transpose is tried, then a one-sided Jacobi SVD.

use super::Matrix;

/// `m = u * diag(s) * v^T` with `k = min(rows, cols)` columns in `u` and `v`
/// and `s` sorted in descending order.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

const CHECK_RTOL: f64 = 1e-11;

pub(crate) fn thin_svd(m: &Matrix) -> ThinSvd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return ThinSvd {
            u: Matrix::zeros(rows, 0),
            s: Vec::new(),
            v: Matrix::zeros(cols, 0),
        };
    }
    if let Some(f) = nalgebra_svd(m).filter(|f| verified(m, f)) {
        return f;
    }
    if let Some(f) = nalgebra_svd(&m.transpose()).map(swap).filter(|f| verified(m, f)) {
        return f;
    }
    jacobi_svd(m)
}

fn swap(f: ThinSvd) -> ThinSvd {
    ThinSvd { u: f.v, s: f.s, v: f.u }
}

fn nalgebra_svd(m: &Matrix) -> Option<ThinSvd> {
    let svd = m.clone().try_svd(true, true, f64::EPSILON, 0)?;
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    Some(sorted(u, svd.singular_values.iter().copied().collect(), v))
}

fn sorted(u: Matrix, s: Vec<f64>, v: Matrix) -> ThinSvd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    ThinSvd {
        u: u.select_columns(order.iter()),
        s: order.iter().map(|&i| s[i]).collect(),
        v: v.select_columns(order.iter()),
    }
}

fn verified(m: &Matrix, f: &ThinSvd) -> bool {
    let k = f.s.len();
    if f.s.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return false;
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let recon = &f.u * Matrix::from_diagonal(&nalgebra::DVector::from_vec(f.s.clone())) * f.v.transpose();
    let eye = Matrix::identity(k, k);
    (recon - m).norm() <= CHECK_RTOL * scale * (1.0 + k as f64)
        && (f.u.transpose() * &f.u - &eye).norm() <= 1e-10
        && (f.v.transpose() * &f.v - &eye).norm() <= 1e-10
}

/// One-sided Jacobi on the columns of a tall matrix.
fn jacobi_svd(m: &Matrix) -> ThinSvd {
    if m.nrows() < m.ncols() {
        return swap(jacobi_svd(&m.transpose()));
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = Matrix::identity(cols, cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (mat, n) in [(&mut a, rows), (&mut v, cols)] {
                    for r in 0..n {
                        let x = mat[(r, i)];
                        let y = mat[(r, j)];
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..cols).map(|k| a.column(k).norm()).collect();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let mut u = Matrix::zeros(rows, cols);
    let mut filled = Vec::new();
    for (k, &sk) in s.iter().enumerate() {
        if sk > f64::EPSILON * smax * rows as f64 && sk > 0.0 {
            u.set_column(k, &(a.column(k) / sk));
            filled.push(k);
        }
    }
    // complete U with an orthonormal basis for the zero directions
    let mut basis: Vec<nalgebra::DVector<f64>> = filled.iter().map(|&k| u.column(k).into_owned()).collect();
    let mut candidate = 0;
    for k in 0..cols {
        if filled.contains(&k) {
            continue;
        }
        loop {
            let mut e = nalgebra::DVector::zeros(rows);
            e[candidate % rows] = 1.0;
            candidate += 1;
            for b in &basis {
                let proj = b.dot(&e);
                e -= b * proj;
            }
            let norm = e.norm();
            if norm > 1e-8 {
                let col = e / norm;
                u.set_column(k, &col);
                basis.push(col);
                break;
            }
        }
    }
    sorted(u, s, v)
}
