//! Past/future data matrices from an offline experiment, the rank
//! assumption on them, output-matrix identification and the state split
//! that the reduced-order design works with.

use serde::Serialize;
use thiserror::Error;

use crate::lti::{output_permutation, ModelError, StatePermutation, Trajectory};
use crate::numerics::{pinv, rank_svd, relative_residual, singular_values, vstack, Matrix, NumericsError, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("trajectory needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("trajectory carries no state samples")]
    MissingStates,
    #[error("state data has rank {rank} < n = {n}; C cannot be identified")]
    StateRankDeficient { rank: usize, n: usize },
    #[error("no output carries information (identified C is zero)")]
    NoOutputs,
    #[error("identified C has p = n = {0}; there is nothing left to observe")]
    NothingToObserve(usize),
    #[error("output block C2 is singular")]
    SingularOutputBlock,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Default relative rank tolerance for decisions on data matrices.
///
/// Data matrices carry accumulated rounding from the experiment, well above
/// `max(rows, cols) * eps` relative to their largest singular value.
pub const DATA_RANK_RTOL: f64 = 1e-9;

/// Column-stacked experiment samples. All matrices have `T - 1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalData {
    pub up: Matrix,
    pub xp: Matrix,
    pub xf: Matrix,
    pub yp: Matrix,
    pub yf: Matrix,
    /// Only present when the experiment logged the disturbance.
    pub dp: Option<Matrix>,
}

impl HistoricalData {
    pub fn columns(&self) -> usize {
        self.xp.ncols()
    }
    pub fn n(&self) -> usize {
        self.xp.nrows()
    }
    pub fn m(&self) -> usize {
        self.up.nrows()
    }
    pub fn p(&self) -> usize {
        self.yp.nrows()
    }
    pub fn q(&self) -> Option<usize> {
        self.dp.as_ref().map(|d| d.nrows())
    }
}

fn columns_of(seq: &[Vector], dim: usize) -> Matrix {
    Matrix::from_fn(dim, seq.len(), |i, j| seq[j][i])
}

/// Stacks samples `0..T-2` into the past matrices and `1..T-1` into the future
/// ones.
pub fn build(traj: &Trajectory) -> Result<HistoricalData, DataError> {
    traj.validate()?;
    let samples = traj.samples();
    if samples < 2 {
        return Err(DataError::TooShort(samples));
    }
    let x = traj.x.as_ref().ok_or(DataError::MissingStates)?;
    let cols = samples - 1;
    let n = x[0].len();
    let p = traj.y[0].len();
    let m = traj.u[0].len();
    let xs = columns_of(x, n);
    let ys = columns_of(&traj.y, p);
    Ok(HistoricalData {
        up: columns_of(&traj.u, m),
        xp: xs.columns(0, cols).into_owned(),
        xf: xs.columns(1, cols).into_owned(),
        yp: ys.columns(0, cols).into_owned(),
        yf: ys.columns(1, cols).into_owned(),
        dp: traj.d.as_ref().map(|d| columns_of(d, d[0].len())),
    })
}

/// Rank test on `[Up; Dp; Xp]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssumptionReport {
    Checked {
        holds: bool,
        observed_rank: usize,
        required_rank: usize,
        smallest_retained_singular_value: Option<f64>,
        largest_discarded_singular_value: Option<f64>,
    },
    /// The disturbance was not logged, so the rank cannot be verified.
    Unverifiable { required_rank_without_d: usize, observed_rank_without_d: usize },
}

impl AssumptionReport {
    pub fn holds(&self) -> Option<bool> {
        match self {
            AssumptionReport::Checked { holds, .. } => Some(*holds),
            AssumptionReport::Unverifiable { .. } => None,
        }
    }
}

pub fn check_assumption(hd: &HistoricalData, rtol: f64) -> Result<AssumptionReport, DataError> {
    match &hd.dp {
        Some(dp) => {
            let stacked = vstack(&[&hd.up, dp, &hd.xp])?;
            let required_rank = stacked.nrows();
            let report = rank_svd(&stacked, Some(rtol))?;
            Ok(AssumptionReport::Checked {
                holds: report.rank == required_rank,
                observed_rank: report.rank,
                required_rank,
                smallest_retained_singular_value: report.smallest_retained(),
                largest_discarded_singular_value: report.largest_discarded(),
            })
        }
        None => {
            let stacked = vstack(&[&hd.up, &hd.xp])?;
            let report = rank_svd(&stacked, Some(rtol))?;
            Ok(AssumptionReport::Unverifiable {
                required_rank_without_d: stacked.nrows(),
                observed_rank_without_d: report.rank,
            })
        }
    }
}

/// Output matrix recovered from `Yp = C Xp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// `Yp Xp^+`, all measured rows.
    pub c_full: Matrix,
    /// Linearly independent rows of `c_full`, earliest rows kept.
    pub c_hat: Matrix,
    pub kept_rows: Vec<usize>,
    pub dependent_rows: Vec<usize>,
    /// `||Yp - C_full Xp||_F / ||Yp||_F`.
    pub residual: f64,
    pub state_singular_values: Vec<f64>,
}

pub fn identify_c(hd: &HistoricalData, rtol: f64) -> Result<Identification, DataError> {
    let n = hd.n();
    let report = rank_svd(&hd.xp, Some(rtol))?;
    if report.rank < n {
        return Err(DataError::StateRankDeficient { rank: report.rank, n });
    }
    let c_full = &hd.yp * pinv(&hd.xp);
    let residual = relative_residual(&(&hd.yp - &c_full * &hd.xp), hd.yp.norm());

    // Greedy forward selection of independent rows.
    let scale = c_full.norm();
    let mut kept_rows = Vec::new();
    let mut dependent_rows = Vec::new();
    for i in 0..c_full.nrows() {
        let mut candidate = kept_rows.clone();
        candidate.push(i);
        let sub = c_full.select_rows(candidate.iter());
        let sv = singular_values(&sub);
        let independent = sv.len() == candidate.len()
            && *sv.last().unwrap() > rtol.max(1e-10) * scale.max(f64::MIN_POSITIVE);
        if independent {
            kept_rows.push(i);
        } else {
            dependent_rows.push(i);
        }
    }
    if kept_rows.is_empty() {
        return Err(DataError::NoOutputs);
    }
    let c_hat = c_full.select_rows(kept_rows.iter());
    Ok(Identification {
        c_full,
        c_hat,
        kept_rows,
        dependent_rows,
        residual,
        state_singular_values: report.singular_values,
    })
}

/// Data in the coordinates where `C_hat = [C1 | C2]` with `C2` nonsingular,
/// restricted to the independent output rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedData {
    pub permutation: StatePermutation,
    pub output_rows: Vec<usize>,
    pub c1: Matrix,
    pub c2: Matrix,
    pub c2_inv: Matrix,
    pub up: Matrix,
    pub yp: Matrix,
    pub yf: Matrix,
    /// Permuted full state data, kept for the full-order kernel test.
    pub xp: Matrix,
    pub xf: Matrix,
    pub xp1: Matrix,
    pub xf1: Matrix,
    pub xp2: Matrix,
    pub xf2: Matrix,
}

impl PartitionedData {
    pub fn n(&self) -> usize {
        self.xp.nrows()
    }
    pub fn m(&self) -> usize {
        self.up.nrows()
    }
    pub fn p(&self) -> usize {
        self.c2.nrows()
    }

    /// Largest relative violation of `X2 = C2^{-1} Y - C2^{-1} C1 X1` over
    /// the past and future blocks.
    pub fn split_residual(&self) -> f64 {
        let past = &self.xp2 - &self.c2_inv * (&self.yp - &self.c1 * &self.xp1);
        let fut = &self.xf2 - &self.c2_inv * (&self.yf - &self.c1 * &self.xf1);
        relative_residual(&past, self.xp2.norm()).max(relative_residual(&fut, self.xf2.norm()))
    }
}

/// Applies the output partition of `id.c_hat` to the state data.
pub fn partition_data(hd: &HistoricalData, id: &Identification) -> Result<PartitionedData, DataError> {
    let permutation = output_permutation(&id.c_hat)?;
    partition_data_with(hd, id, permutation)
}

/// Same as [`partition_data`] under a caller-chosen state ordering.
pub fn partition_data_with(
    hd: &HistoricalData,
    id: &Identification,
    permutation: StatePermutation,
) -> Result<PartitionedData, DataError> {
    let n = hd.n();
    let p = id.c_hat.nrows();
    if p >= n {
        return Err(DataError::NothingToObserve(n));
    }
    if permutation.len() != n {
        return Err(DataError::Model(ModelError::Dimension(format!(
            "permutation of length {} for n = {n}",
            permutation.len()
        ))));
    }
    let r = n - p;
    let c = permutation.permute_cols(&id.c_hat);
    let c1 = c.columns(0, r).into_owned();
    let c2 = c.columns(r, p).into_owned();
    let c2_inv = c2.clone().try_inverse().ok_or(DataError::SingularOutputBlock)?;
    let xp = permutation.permute_rows(&hd.xp);
    let xf = permutation.permute_rows(&hd.xf);
    Ok(PartitionedData {
        output_rows: id.kept_rows.clone(),
        up: hd.up.clone(),
        yp: hd.yp.select_rows(id.kept_rows.iter()),
        yf: hd.yf.select_rows(id.kept_rows.iter()),
        xp1: xp.rows(0, r).into_owned(),
        xf1: xf.rows(0, r).into_owned(),
        xp2: xp.rows(r, p).into_owned(),
        xf2: xf.rows(r, p).into_owned(),
        xp,
        xf,
        c1,
        c2,
        c2_inv,
        permutation,
    })
}
