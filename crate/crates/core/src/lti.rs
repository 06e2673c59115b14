//! Discrete-time plant `x(t+1) = A x(t) + B u(t) + E d(t)`, `y(t) = C x(t)`,
//! its output-conformal block partition, simulation and offline experiments.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{ensure_finite, rank_or_zero, Matrix, NumericsError, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("E must have full column rank {q}, found rank {rank}")]
    DisturbanceRankDeficient { q: usize, rank: usize },
    #[error("C must have full row rank {p}, found rank {rank}")]
    OutputRankDeficient { p: usize, rank: usize },
    #[error("sequence length mismatch: {0}")]
    Length(String),
    #[error("invalid interval ({0}, {1})")]
    Interval(f64, f64),
    #[error("horizon must be at least 2, got {0}")]
    Horizon(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Relative tolerance used for the structural rank checks on `E` and `C`.
pub const STRUCTURE_RTOL: f64 = 1e-10;

/// The plant `(A, B, E, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    e: Matrix,
    c: Matrix,
}

impl LtiSystem {
    /// Validates shapes, finiteness, `rank(E) = q` and `rank(C) = p`.
    pub fn new(a: Matrix, b: Matrix, e: Matrix, c: Matrix) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ModelError::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(ModelError::Dimension(format!("B has {} rows, n = {n}", b.nrows())));
        }
        if e.nrows() != n {
            return Err(ModelError::Dimension(format!("E has {} rows, n = {n}", e.nrows())));
        }
        if c.ncols() != n {
            return Err(ModelError::Dimension(format!("C has {} columns, n = {n}", c.ncols())));
        }
        for m in [&a, &b, &e, &c] {
            ensure_finite(m)?;
        }
        let q = e.ncols();
        let rank_e = rank_or_zero(&e, Some(STRUCTURE_RTOL));
        if rank_e != q {
            return Err(ModelError::DisturbanceRankDeficient { q, rank: rank_e });
        }
        let p = c.nrows();
        let rank_c = rank_or_zero(&c, Some(STRUCTURE_RTOL));
        if rank_c != p {
            return Err(ModelError::OutputRankDeficient { p, rank: rank_c });
        }
        Ok(Self { a, b, e, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn e(&self) -> &Matrix {
        &self.e
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn q(&self) -> usize {
        self.e.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// One step of the state recursion.
    pub fn next_state(&self, x: &Vector, u: &Vector, d: Option<&Vector>) -> Vector {
        let mut next = &self.a * x + &self.b * u;
        if let Some(d) = d {
            next += &self.e * d;
        }
        next
    }

    pub fn output(&self, x: &Vector) -> Vector {
        &self.c * x
    }
}

/// State reordering `x_new[i] = x_orig[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePermutation(Vec<usize>);

impl StatePermutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Accepts any arrangement of `0..n`.
    pub fn new(order: Vec<usize>) -> Result<Self, ModelError> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || seen[i] {
                return Err(ModelError::Dimension(format!("{order:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(Self(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `P^T x`: original ordering to internal ordering.
    pub fn permute_vector(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.0.len(), |i, _| x[self.0[i]])
    }

    /// `P x`: internal ordering back to the original one.
    pub fn unpermute_vector(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.0.len());
        for (i, &j) in self.0.iter().enumerate() {
            out[j] = x[i];
        }
        out
    }

    /// `P^T M`, reordering state rows.
    pub fn permute_rows(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(self.0.len(), m.ncols(), |i, j| m[(self.0[i], j)])
    }

    /// `M P`, reordering state columns.
    pub fn permute_cols(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.nrows(), self.0.len(), |i, j| m[(i, self.0[j])])
    }

    pub fn unpermute_rows(&self, m: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for (i, &j) in self.0.iter().enumerate() {
            out.row_mut(j).copy_from(&m.row(i));
        }
        out
    }

    pub fn unpermute_cols(&self, m: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for (i, &j) in self.0.iter().enumerate() {
            out.column_mut(j).copy_from(&m.column(i));
        }
        out
    }
}

/// Chooses a state ordering whose trailing `p` columns of `C` form a
/// nonsingular block.
///
/// Columns are scanned from last to first and kept when they add rank, so a
/// `C` whose trailing block already works yields the identity. The selected
/// columns keep their relative order at the end; the rest keep theirs at the
/// front.
pub fn output_permutation(c: &Matrix) -> Result<StatePermutation, ModelError> {
    let (p, n) = c.shape();
    let scale = c.norm().max(f64::MIN_POSITIVE);
    let tol = STRUCTURE_RTOL * scale;
    let mut basis: Vec<Vector> = Vec::with_capacity(p);
    let mut chosen = Vec::with_capacity(p);
    for j in (0..n).rev() {
        if chosen.len() == p {
            break;
        }
        let mut v: Vector = c.column(j).into_owned();
        // two passes of Gram-Schmidt for numerical safety
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > tol {
            basis.push(v / norm);
            chosen.push(j);
        }
    }
    if chosen.len() < p {
        return Err(ModelError::OutputRankDeficient { p, rank: chosen.len() });
    }
    chosen.sort_unstable();
    let mut order: Vec<usize> = (0..n).filter(|j| !chosen.contains(j)).collect();
    order.extend(chosen);
    StatePermutation::new(order)
}

/// The plant in coordinates where `C = [C1 | C2]` with `C2` nonsingular.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSystem {
    pub a11: Matrix,
    pub a12: Matrix,
    pub a21: Matrix,
    pub a22: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub e1: Matrix,
    pub e2: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    pub c2_inv: Matrix,
    pub permutation: StatePermutation,
}

impl PartitionedSystem {
    /// Partition under an explicit state ordering.
    pub fn with_permutation(sys: &LtiSystem, permutation: StatePermutation) -> Result<Self, ModelError> {
        let n = sys.n();
        let p = sys.p();
        if permutation.len() != n {
            return Err(ModelError::Dimension(format!(
                "permutation of length {} for n = {n}",
                permutation.len()
            )));
        }
        let a = permutation.permute_cols(&permutation.permute_rows(sys.a()));
        let b = permutation.permute_rows(sys.b());
        let e = permutation.permute_rows(sys.e());
        let c = permutation.permute_cols(sys.c());
        let r = n - p;
        let c2 = c.columns(r, p).into_owned();
        let c2_inv = c2
            .clone()
            .try_inverse()
            .ok_or(ModelError::OutputRankDeficient { p, rank: p.saturating_sub(1) })?;
        Ok(Self {
            a11: a.view((0, 0), (r, r)).into_owned(),
            a12: a.view((0, r), (r, p)).into_owned(),
            a21: a.view((r, 0), (p, r)).into_owned(),
            a22: a.view((r, r), (p, p)).into_owned(),
            b1: b.rows(0, r).into_owned(),
            b2: b.rows(r, p).into_owned(),
            e1: e.rows(0, r).into_owned(),
            e2: e.rows(r, p).into_owned(),
            c1: c.columns(0, r).into_owned(),
            c2,
            c2_inv,
            permutation,
        })
    }

    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    pub fn p(&self) -> usize {
        self.c2.nrows()
    }

    /// Rebuilds `(A, B, E, C)` in the original state ordering.
    pub fn reassemble(&self) -> Result<LtiSystem, ModelError> {
        let n = self.n();
        let p = self.p();
        let r = n - p;
        let m = self.b1.ncols();
        let q = self.e1.ncols();
        let mut a = Matrix::zeros(n, n);
        a.view_mut((0, 0), (r, r)).copy_from(&self.a11);
        a.view_mut((0, r), (r, p)).copy_from(&self.a12);
        a.view_mut((r, 0), (p, r)).copy_from(&self.a21);
        a.view_mut((r, r), (p, p)).copy_from(&self.a22);
        let mut b = Matrix::zeros(n, m);
        b.rows_mut(0, r).copy_from(&self.b1);
        b.rows_mut(r, p).copy_from(&self.b2);
        let mut e = Matrix::zeros(n, q);
        e.rows_mut(0, r).copy_from(&self.e1);
        e.rows_mut(r, p).copy_from(&self.e2);
        let mut c = Matrix::zeros(p, n);
        c.columns_mut(0, r).copy_from(&self.c1);
        c.columns_mut(r, p).copy_from(&self.c2);
        let perm = &self.permutation;
        LtiSystem::new(
            perm.unpermute_cols(&perm.unpermute_rows(&a)),
            perm.unpermute_rows(&b),
            perm.unpermute_rows(&e),
            perm.unpermute_cols(&c),
        )
    }

    /// `x2 = C2^{-1} y - C2^{-1} C1 x1`.
    pub fn recover_x2(&self, y: &Vector, x1: &Vector) -> Vector {
        &self.c2_inv * (y - &self.c1 * x1)
    }

    /// `x1(t+1) = (A11 - A12 C2^{-1} C1) x1 + A12 C2^{-1} y + B1 u + E1 d`.
    pub fn next_x1(&self, x1: &Vector, y: &Vector, u: &Vector, d: Option<&Vector>) -> Vector {
        let a12_c2inv = &self.a12 * &self.c2_inv;
        let mut next = (&self.a11 - &a12_c2inv * &self.c1) * x1 + a12_c2inv * y + &self.b1 * u;
        if let Some(d) = d {
            next += &self.e1 * d;
        }
        next
    }
}

/// Finds a nonsingular trailing output block and partitions the plant.
pub fn partition(sys: &LtiSystem) -> Result<PartitionedSystem, ModelError> {
    let perm = output_permutation(sys.c())?;
    PartitionedSystem::with_permutation(sys, perm)
}

/// Time-indexed input, disturbance, state and output samples.
///
/// `u` and `d` hold `N` samples, `x` and `y` hold `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: Vec<Vector>,
    /// Logged for analysis only; the design path never reads it.
    pub d: Option<Vec<Vector>>,
    pub x: Option<Vec<Vector>>,
    pub y: Vec<Vector>,
}

impl Trajectory {
    /// Number of input steps `N`.
    pub fn steps(&self) -> usize {
        self.u.len()
    }

    /// Number of state/output samples `T = N + 1`.
    pub fn samples(&self) -> usize {
        self.y.len()
    }

    /// Checks internal length consistency and per-sample dimensions.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n_steps = self.u.len();
        if self.y.len() != n_steps + 1 {
            return Err(ModelError::Length(format!(
                "{} outputs for {n_steps} inputs (expected {})",
                self.y.len(),
                n_steps + 1
            )));
        }
        if let Some(x) = &self.x {
            if x.len() != n_steps + 1 {
                return Err(ModelError::Length(format!(
                    "{} states for {n_steps} inputs (expected {})",
                    x.len(),
                    n_steps + 1
                )));
            }
            uniform_dim(x, "x")?;
        }
        if let Some(d) = &self.d {
            if d.len() != n_steps {
                return Err(ModelError::Length(format!("{} disturbances for {n_steps} inputs", d.len())));
            }
            uniform_dim(d, "d")?;
        }
        uniform_dim(&self.u, "u")?;
        uniform_dim(&self.y, "y")?;
        Ok(())
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.u.first().map(|v| v.len())
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.y.first().map(|v| v.len())
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.x.as_ref().and_then(|x| x.first()).map(|v| v.len())
    }

    pub fn disturbance_dim(&self) -> Option<usize> {
        self.d.as_ref().and_then(|d| d.first()).map(|v| v.len())
    }
}

fn uniform_dim(seq: &[Vector], name: &str) -> Result<(), ModelError> {
    if let Some(first) = seq.first() {
        if let Some((t, v)) = seq.iter().enumerate().find(|(_, v)| v.len() != first.len()) {
            return Err(ModelError::Dimension(format!(
                "{name}({t}) has length {}, expected {}",
                v.len(),
                first.len()
            )));
        }
    }
    Ok(())
}

/// Forward recursion from `x0` under the given input and disturbance.
///
/// `d = None` simulates the disturbance-free plant.
pub fn simulate(sys: &LtiSystem, x0: &Vector, u: &[Vector], d: Option<&[Vector]>) -> Result<Trajectory, ModelError> {
    if x0.len() != sys.n() {
        return Err(ModelError::Dimension(format!("x0 has length {}, n = {}", x0.len(), sys.n())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Dimension("x0 has non-finite entries".into()));
    }
    if let Some(d) = d {
        if d.len() != u.len() {
            return Err(ModelError::Length(format!("{} inputs vs {} disturbances", u.len(), d.len())));
        }
        if let Some((t, _)) = d.iter().enumerate().find(|(_, v)| v.len() != sys.q()) {
            return Err(ModelError::Dimension(format!("d({t}) does not have length q = {}", sys.q())));
        }
    }
    if let Some((t, _)) = u.iter().enumerate().find(|(_, v)| v.len() != sys.m()) {
        return Err(ModelError::Dimension(format!("u({t}) does not have length m = {}", sys.m())));
    }

    let mut xs = Vec::with_capacity(u.len() + 1);
    let mut ys = Vec::with_capacity(u.len() + 1);
    let mut x = x0.clone();
    for (t, ut) in u.iter().enumerate() {
        ys.push(sys.output(&x));
        let next = sys.next_state(&x, ut, d.map(|d| &d[t]));
        xs.push(std::mem::replace(&mut x, next));
    }
    ys.push(sys.output(&x));
    xs.push(x);
    Ok(Trajectory {
        u: u.to_vec(),
        d: d.map(|d| d.to_vec()),
        x: Some(xs),
        y: ys,
    })
}

/// Settings for a randomly excited offline experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Number of recorded state samples `T`; inputs cover `0..T-1`.
    pub samples: usize,
    pub u_range: (f64, f64),
    pub d_range: (f64, f64),
    pub seed: u64,
    /// Drawn uniformly from `u_range` when absent.
    pub x0: Option<Vector>,
}

impl ExperimentConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            u_range: (-5.0, 5.0),
            d_range: (-2.0, 2.0),
            seed,
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub trajectory: Trajectory,
    pub warnings: Vec<String>,
}

fn uniform(range: (f64, f64)) -> Result<Uniform<f64>, ModelError> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ModelError::Interval(lo, hi));
    }
    Uniform::new(lo, hi).map_err(|_| ModelError::Interval(lo, hi))
}

/// Runs the plant under i.i.d. uniform inputs and disturbances.
///
/// Draw order from the seeded stream: `x0` (if not supplied), then per step
/// `u(t)` followed by `d(t)`.
pub fn generate_experiment(sys: &LtiSystem, cfg: &ExperimentConfig) -> Result<Experiment, ModelError> {
    if cfg.samples < 2 {
        return Err(ModelError::Horizon(cfg.samples));
    }
    let u_dist = uniform(cfg.u_range)?;
    let d_dist = uniform(cfg.d_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = match &cfg.x0 {
        Some(x0) => x0.clone(),
        None => Vector::from_fn(sys.n(), |_, _| u_dist.sample(&mut rng)),
    };
    let steps = cfg.samples - 1;
    let mut u = Vec::with_capacity(steps);
    let mut d = Vec::with_capacity(steps);
    for _ in 0..steps {
        u.push(Vector::from_fn(sys.m(), |_, _| u_dist.sample(&mut rng)));
        d.push(Vector::from_fn(sys.q(), |_, _| d_dist.sample(&mut rng)));
    }
    let trajectory = simulate(sys, &x0, &u, Some(&d))?;

    let mut warnings = Vec::new();
    let required = sys.m() + sys.q() + sys.n();
    if steps < required {
        warnings.push(format!(
            "{steps} data columns cannot reach the required rank m+q+n = {required}"
        ));
    }
    Ok(Experiment { trajectory, warnings })
}

/// Disturbance samples drawn per component from individual intervals.
pub fn random_disturbance(ranges: &[(f64, f64)], steps: usize, seed: u64) -> Result<Vec<Vector>, ModelError> {
    let dists = ranges.iter().map(|&r| uniform(r)).collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..steps)
        .map(|_| Vector::from_fn(dists.len(), |i, _| dists[i].sample(&mut rng)))
        .collect())
}

/// Test input `u(t) = [0.8 cos(0.2 t + 2); 3 t]`.
pub fn cosine_ramp_input(steps: usize) -> Vec<Vector> {
    (0..steps)
        .map(|t| {
            let t = t as f64;
            Vector::from_vec(vec![0.8 * (0.2 * t + 2.0).cos(), 3.0 * t])
        })
        .collect()
}
