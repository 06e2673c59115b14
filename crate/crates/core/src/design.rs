//! Reduced-order unknown-input observer synthesis.
//!
//! Two routes produce the same observer class:
//!
//! * model-based: solve the decoupling equation `D_UIO (C E) = E1`, then pick
//!   the free part of `D_UIO` so that `A_UIO` is Schur;
//! * data-driven: solve `Xf1 = [S1|S2|S3|S4] [Up; Yp; Yf; Xp1]` over the
//!   affine family `Xf1 M^+ + W (I - M M^+)` and pick `W` so that `S4` is
//!   Schur.
//!
//! [`condition_residuals`] evaluates the model-based acceptor equations on any
//! observer, which is how the two routes are cross-checked.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::data::{
    self, build, check_assumption, identify_c, partition_data, AssumptionReport, DataError, HistoricalData,
    Identification, PartitionedData,
};
use crate::lti::{partition, LtiSystem, ModelError, PartitionedSystem, StatePermutation, Trajectory};
use crate::numerics::{
    is_schur, pencil_unstable_zeros, pinv_with_rtol, relative_residual, row_space_included, singular_values,
    stabilize_pair, vstack, Matrix, NumericsError, StabilizeError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    /// The reduced kernel inclusion fails, so no acceptor can be built from
    /// this data.
    #[error("no acceptor: ker([Up; Yp; Yf; Xp1]) is not contained in ker(Xf1)")]
    NoAcceptor,
    /// `D_UIO (C E) = E1` has no solution.
    #[error("disturbance cannot be decoupled: rank(CE) = {rank_ce}, q = {q}")]
    DecouplingImpossible { rank_ce: usize, q: usize },
    #[error("no Schur-stable observer in the solution family; fixed eigenvalue(s) {}", format_eigs(.eigenvalues))]
    StabilizationImpossible { eigenvalues: Vec<Complex64> },
    #[error("stabilization did not verify (spectral radius {spectral_radius})")]
    StabilizationFailed { spectral_radius: f64 },
    #[error("designed observer violates its defining equations: {0:?}")]
    Verification(ConditionResiduals),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn format_eigs(eigs: &[Complex64]) -> String {
    eigs.iter()
        .map(|l| format!("{:.6}{:+.6}i", l.re, l.im))
        .collect::<Vec<_>>()
        .join(", ")
}

impl DesignError {
    /// Coarse class used by the CLI exit codes: existence vs stabilization.
    pub fn is_existence_failure(&self) -> bool {
        matches!(
            self,
            DesignError::NoAcceptor
                | DesignError::DecouplingImpossible { .. }
                | DesignError::Data(
                    DataError::StateRankDeficient { .. } | DataError::NoOutputs | DataError::NothingToObserve(_)
                )
        )
    }

    pub fn is_stabilization_failure(&self) -> bool {
        matches!(
            self,
            DesignError::StabilizationImpossible { .. } | DesignError::StabilizationFailed { .. }
        )
    }
}

/// Tolerances shared by all design routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConfig {
    /// Relative rank tolerance for data and structural rank decisions.
    pub rank_rtol: f64,
    /// Relative residual accepted when re-verifying designed matrices.
    pub residual_tol: f64,
    /// Required distance of the observer spectrum from the unit circle.
    pub stability_margin: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            rank_rtol: data::DATA_RANK_RTOL,
            residual_tol: 1e-8,
            stability_margin: 0.0,
        }
    }
}

/// Observer `z+ = A z + Bu u + By y`, `x1 = z + D y`,
/// `x2 = C2^{-1}(y - C1 x1)`, in the state ordering given by `permutation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ruio {
    pub a_uio: Matrix,
    pub b_u: Matrix,
    pub b_y: Matrix,
    pub d_uio: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    pub c2_inv: Matrix,
    pub permutation: StatePermutation,
    /// Indices of the measured outputs the observer consumes.
    pub output_rows: Vec<usize>,
    /// Length of the measured output vector fed to the observer.
    pub measured_outputs: usize,
}

impl Ruio {
    /// Assembles an observer, checking every block against `(n, m, p)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_uio: Matrix,
        b_u: Matrix,
        b_y: Matrix,
        d_uio: Matrix,
        c1: Matrix,
        c2: Matrix,
        permutation: StatePermutation,
        output_rows: Vec<usize>,
        measured_outputs: usize,
    ) -> Result<Self, DesignError> {
        let p = c2.nrows();
        let n = permutation.len();
        if p > n || c2.ncols() != p {
            return Err(DesignError::Dimension(format!("C2 is {:?} for n = {n}", c2.shape())));
        }
        let r = n - p;
        let m = b_u.ncols();
        let checks = [
            ("A_UIO", a_uio.shape(), (r, r)),
            ("B_u", b_u.shape(), (r, m)),
            ("B_y", b_y.shape(), (r, p)),
            ("D_UIO", d_uio.shape(), (r, p)),
            ("C1", c1.shape(), (p, r)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(DesignError::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if output_rows.len() != p || output_rows.iter().any(|&i| i >= measured_outputs) {
            return Err(DesignError::Dimension(format!(
                "output rows {output_rows:?} do not select {p} of {measured_outputs} outputs"
            )));
        }
        let c2_inv = c2
            .clone()
            .try_inverse()
            .ok_or(DesignError::Data(DataError::SingularOutputBlock))?;
        Ok(Self {
            a_uio,
            b_u,
            b_y,
            d_uio,
            c1,
            c2,
            c2_inv,
            permutation,
            output_rows,
            measured_outputs,
        })
    }

    pub fn n(&self) -> usize {
        self.permutation.len()
    }
    pub fn m(&self) -> usize {
        self.b_u.ncols()
    }
    pub fn p(&self) -> usize {
        self.c2.nrows()
    }
    pub fn order(&self) -> usize {
        self.a_uio.nrows()
    }

    pub fn spectral_radius(&self) -> Result<f64, NumericsError> {
        crate::numerics::spectral_radius(&self.a_uio)
    }

    /// `[S1 | S2 | S3 | S4] = [B_u | B_y - A D | D | A]`.
    pub fn design_blocks(&self) -> DesignBlocks {
        DesignBlocks {
            s1: self.b_u.clone(),
            s2: &self.b_y - &self.a_uio * &self.d_uio,
            s3: self.d_uio.clone(),
            s4: self.a_uio.clone(),
        }
    }
}

/// The four column blocks of a solution of the data design equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    pub s1: Matrix,
    pub s2: Matrix,
    pub s3: Matrix,
    pub s4: Matrix,
}

impl DesignBlocks {
    fn split(full: &Matrix, m: usize, p: usize) -> Self {
        let r = full.nrows();
        Self {
            s1: full.columns(0, m).into_owned(),
            s2: full.columns(m, p).into_owned(),
            s3: full.columns(m + p, p).into_owned(),
            s4: full.columns(m + 2 * p, r).into_owned(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        crate::numerics::hstack(&[&self.s1, &self.s2, &self.s3, &self.s4]).expect("blocks share a row count")
    }
}

/// `[S1|S2|S3|S4] = particular + W * projector`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub blocks: DesignBlocks,
    /// `Xf1 M^+`, the minimum-norm solution.
    pub particular: Matrix,
    /// `I - M M^+`.
    pub projector: Matrix,
    pub w: Matrix,
    /// `M = [Up; Yp; Yf; Xp1]`.
    pub stacked: Matrix,
    m: usize,
    p: usize,
}

impl DesignSolution {
    pub fn full(&self) -> Matrix {
        &self.particular + &self.w * &self.projector
    }

    /// Same family member selection with a different free parameter.
    pub fn with_w(&self, w: Matrix) -> Result<Self, DesignError> {
        if w.shape() != self.w.shape() {
            return Err(DesignError::Dimension(format!(
                "W is {:?}, expected {:?}",
                w.shape(),
                self.w.shape()
            )));
        }
        let full = &self.particular + &w * &self.projector;
        Ok(Self {
            blocks: DesignBlocks::split(&full, self.m, self.p),
            w,
            ..self.clone()
        })
    }

    /// `||S M - Xf1||_F / ||Xf1||_F`.
    pub fn residual(&self, xf1: &Matrix) -> f64 {
        relative_residual(&(self.full() * &self.stacked - xf1), xf1.norm())
    }

    /// Columns of the projector acting on the `S4` block.
    pub fn s4_projector(&self) -> Matrix {
        let r = self.particular.nrows();
        self.projector.columns(self.m + 2 * self.p, r).into_owned()
    }

    pub fn to_ruio(&self, pd: &PartitionedData, measured_outputs: usize) -> Result<Ruio, DesignError> {
        let b = &self.blocks;
        Ruio::new(
            b.s4.clone(),
            b.s1.clone(),
            &b.s2 + &b.s4 * &b.s3,
            b.s3.clone(),
            pd.c1.clone(),
            pd.c2.clone(),
            pd.permutation.clone(),
            pd.output_rows.clone(),
            measured_outputs,
        )
    }
}

/// Complex number in report form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

/// Existence conditions, each computed by its own test. `None` means the test
/// could not be run with the information at hand.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExistenceReport {
    pub rank_ce: Option<usize>,
    pub q: Option<usize>,
    /// `rank(CE) = q`.
    pub rank_ce_ok: Option<bool>,
    /// Rank condition on `[zI - A, -E; C, 0]` for `|z| >= 1`.
    pub strong_star_ok: Option<bool>,
    pub unstable_zeros: Vec<ComplexValue>,
    /// The pencil never reaches full column rank.
    pub pencil_degenerate: bool,
    /// Reduced inclusion `ker([Up;Yp;Yf;Xp1]) ⊆ ker(Xf1)`.
    pub kernel_inclusion_ok: Option<bool>,
    /// Full-order inclusion `ker([Up;Yp;Yf;Xp]) ⊆ ker(Xf)`.
    pub kernel_inclusion_full_ok: Option<bool>,
    pub assumption_ok: Option<bool>,
}

impl ExistenceReport {
    /// Both model-based conditions hold (when they were checked).
    pub fn model_conditions_hold(&self) -> Option<bool> {
        Some(self.rank_ce_ok? && self.strong_star_ok?)
    }
}

/// Rank of `C E`, with singular values judged against `||C|| ||E||` so that a
/// product that vanishes up to rounding counts as rank zero.
fn product_rank(c: &Matrix, e: &Matrix, rtol: f64) -> usize {
    let scale = singular_values(c).first().copied().unwrap_or(0.0) * singular_values(e).first().copied().unwrap_or(0.0);
    singular_values(&(c * e)).iter().filter(|&&s| s > rtol * scale).count()
}

/// Checks `rank(CE) = q` and the strong* detectability rank condition.
pub fn check_existence_model_based(sys: &LtiSystem, cfg: &DesignConfig) -> ExistenceReport {
    let q = sys.q();
    let rank_ce = if q == 0 {
        0
    } else {
        product_rank(sys.c(), sys.e(), cfg.rank_rtol)
    };
    let mut report = ExistenceReport {
        rank_ce: Some(rank_ce),
        q: Some(q),
        rank_ce_ok: Some(rank_ce == q),
        ..Default::default()
    };
    match pencil_unstable_zeros(sys.a(), sys.e(), sys.c()) {
        Ok(z) => {
            report.strong_star_ok = Some(z.unstable.is_empty());
            report.unstable_zeros = z.unstable.into_iter().map(Into::into).collect();
        }
        Err(NumericsError::DegeneratePencil { .. }) => {
            report.strong_star_ok = Some(false);
            report.pencil_degenerate = true;
        }
        Err(_) => report.strong_star_ok = None,
    }
    report
}

/// Residuals of the acceptor equations for `ruio` against a partitioned plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionResiduals {
    pub spectral_radius: f64,
    /// `A_UIO = (I - D C1) Ā11 - D C2 Ā21`.
    pub state: f64,
    /// `B_u = (I - D C1) B1 - D C2 B2`.
    pub input: f64,
    /// `B_y = A D + (I - D C1) A12 C2^{-1} - D C2 A22 C2^{-1}`.
    pub output: f64,
    /// `(I - D C1) E1 - D C2 E2 = 0`.
    pub decoupling: f64,
}

impl ConditionResiduals {
    pub fn max_residual(&self) -> f64 {
        self.state.max(self.input).max(self.output).max(self.decoupling)
    }

    pub fn acceptor_holds(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Evaluates the acceptor equations; each residual is relative to the norms
/// of the terms it compares.
pub fn condition_residuals(ps: &PartitionedSystem, ruio: &Ruio) -> Result<ConditionResiduals, DesignError> {
    if ps.permutation != ruio.permutation || ps.p() != ruio.p() {
        return Err(DesignError::Dimension(
            "plant and observer use different state partitions".into(),
        ));
    }
    let r = ruio.order();
    let d = &ruio.d_uio;
    let i_dc1 = Matrix::identity(r, r) - d * &ps.c1;
    let bar11 = &ps.a11 - &ps.a12 * &ps.c2_inv * &ps.c1;
    let bar21 = &ps.a21 - &ps.a22 * &ps.c2_inv * &ps.c1;
    let dc2 = d * &ps.c2;

    let state_rhs = &i_dc1 * &bar11 - &dc2 * &bar21;
    let state = relative_residual(&(&ruio.a_uio - &state_rhs), ruio.a_uio.norm().max(state_rhs.norm()));

    let input_rhs = &i_dc1 * &ps.b1 - &dc2 * &ps.b2;
    let input = relative_residual(&(&ruio.b_u - &input_rhs), ruio.b_u.norm().max(input_rhs.norm()));

    let output_rhs = &ruio.a_uio * d + &i_dc1 * &ps.a12 * &ps.c2_inv - &dc2 * &ps.a22 * &ps.c2_inv;
    let output = relative_residual(&(&ruio.b_y - &output_rhs), ruio.b_y.norm().max(output_rhs.norm()));

    let dec_a = &i_dc1 * &ps.e1;
    let dec_b = &dc2 * &ps.e2;
    let decoupling = relative_residual(&(&dec_a - &dec_b), dec_a.norm().max(dec_b.norm()));

    Ok(ConditionResiduals {
        spectral_radius: ruio.spectral_radius()?,
        state,
        input,
        output,
        decoupling,
    })
}

/// Partition of `sys` restricted to `output_rows` under `permutation`.
pub fn partition_like(
    sys: &LtiSystem,
    permutation: &StatePermutation,
    output_rows: &[usize],
) -> Result<PartitionedSystem, DesignError> {
    let c = sys.c().select_rows(output_rows.iter());
    let reduced = LtiSystem::new(sys.a().clone(), sys.b().clone(), sys.e().clone(), c)?;
    Ok(PartitionedSystem::with_permutation(&reduced, permutation.clone())?)
}

fn stabilize_with_margin(a0: &Matrix, g: &Matrix, margin: f64) -> Result<Matrix, DesignError> {
    let scale = 1.0 - margin;
    match stabilize_pair(&(a0 / scale), &(g / scale)) {
        Ok(w) => Ok(w),
        Err(StabilizeError::Infeasible { eigenvalues }) => Err(DesignError::StabilizationImpossible {
            eigenvalues: eigenvalues.into_iter().map(|l| l * scale).collect(),
        }),
        Err(StabilizeError::VerificationFailed { spectral_radius }) => Err(DesignError::StabilizationFailed {
            spectral_radius: spectral_radius * scale,
        }),
        Err(StabilizeError::Numerics(e)) => Err(e.into()),
    }
}

/// Model-based synthesis from known `(A, B, E, C)`.
///
/// `D_UIO = E1 (CE)^+ + K (I - CE (CE)^+)` solves the decoupling equation;
/// `A_UIO` is affine in `K` and `K` is chosen by [`stabilize_pair`]. The
/// remaining matrices follow from the input and output equations, and the
/// result is re-checked against all of them.
pub fn design_model_based(sys: &LtiSystem, cfg: &DesignConfig) -> Result<Ruio, DesignError> {
    let ps = partition(sys)?;
    let n = sys.n();
    let p = sys.p();
    let q = sys.q();
    if p >= n {
        return Err(DesignError::Data(DataError::NothingToObserve(n)));
    }
    let r = n - p;

    let ce = &ps.c1 * &ps.e1 + &ps.c2 * &ps.e2;
    let (d0, proj) = if q == 0 {
        (Matrix::zeros(r, p), Matrix::identity(p, p))
    } else {
        // rank(CE) = q makes D (CE) = E1 solvable for any E1
        let rank_ce = product_rank(sys.c(), sys.e(), cfg.rank_rtol);
        if rank_ce < q {
            return Err(DesignError::DecouplingImpossible { rank_ce, q });
        }
        let ce_pinv = pinv_with_rtol(&ce, cfg.rank_rtol);
        (&ps.e1 * &ce_pinv, Matrix::identity(p, p) - &ce * &ce_pinv)
    };

    let bar11 = &ps.a11 - &ps.a12 * &ps.c2_inv * &ps.c1;
    let bar21 = &ps.a21 - &ps.a22 * &ps.c2_inv * &ps.c1;
    let gamma = &ps.c1 * &bar11 + &ps.c2 * &bar21;

    let a0 = &bar11 - &d0 * &gamma;
    let g = &proj * &gamma;
    let w = stabilize_with_margin(&a0, &g, cfg.stability_margin)?;
    let d = &d0 - &w * &proj;

    let a_uio = &bar11 - &d * &gamma;
    let cb = &ps.c1 * &ps.b1 + &ps.c2 * &ps.b2;
    let b_u = &ps.b1 - &d * cb;
    let b_y = &a_uio * &d + &ps.a12 * &ps.c2_inv - &d * (&ps.c1 * &ps.a12 + &ps.c2 * &ps.a22) * &ps.c2_inv;

    let ruio = Ruio::new(
        a_uio,
        b_u,
        b_y,
        d,
        ps.c1.clone(),
        ps.c2.clone(),
        ps.permutation.clone(),
        (0..p).collect(),
        p,
    )?;
    let res = condition_residuals(&ps, &ruio)?;
    if !res.acceptor_holds(1e-9) {
        return Err(DesignError::Verification(res));
    }
    let (ok, rho) = is_schur(&ruio.a_uio, cfg.stability_margin)?;
    if !ok {
        return Err(DesignError::StabilizationFailed { spectral_radius: rho });
    }
    Ok(ruio)
}

/// Outcome of both kernel inclusion tests on partitioned data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelInclusion {
    /// `ker([Up; Yp; Yf; Xp1]) ⊆ ker(Xf1)`.
    pub reduced: bool,
    /// `ker([Up; Yp; Yf; Xp]) ⊆ ker(Xf)`.
    pub full: bool,
}

pub fn reduced_stack(pd: &PartitionedData) -> Matrix {
    vstack(&[&pd.up, &pd.yp, &pd.yf, &pd.xp1]).expect("data blocks share a column count")
}

pub fn check_kernel_inclusion(pd: &PartitionedData, rtol: f64) -> Result<KernelInclusion, DesignError> {
    let reduced = row_space_included(&reduced_stack(pd), &pd.xf1, Some(rtol))?;
    let full_stack = vstack(&[&pd.up, &pd.yp, &pd.yf, &pd.xp])?;
    let full = row_space_included(&full_stack, &pd.xf, Some(rtol))?;
    Ok(KernelInclusion { reduced, full })
}

/// Minimum-norm solution of the data design equation plus its null-space
/// projector, with `W = 0`.
pub fn solve_design_equation(pd: &PartitionedData, cfg: &DesignConfig) -> Result<DesignSolution, DesignError> {
    let stacked = reduced_stack(pd);
    if !row_space_included(&stacked, &pd.xf1, Some(cfg.rank_rtol))? {
        return Err(DesignError::NoAcceptor);
    }
    let m_pinv = pinv_with_rtol(&stacked, cfg.rank_rtol);
    let particular = &pd.xf1 * &m_pinv;
    let size = stacked.nrows();
    let projector = Matrix::identity(size, size) - &stacked * &m_pinv;
    let w = Matrix::zeros(particular.nrows(), size);
    let sol = DesignSolution {
        blocks: DesignBlocks::split(&particular, pd.m(), pd.p()),
        particular,
        projector,
        w,
        stacked,
        m: pd.m(),
        p: pd.p(),
    };
    if sol.residual(&pd.xf1) > cfg.residual_tol {
        return Err(DesignError::NoAcceptor);
    }
    Ok(sol)
}

/// Reads the observer off a design solution, moving `W` away from zero only
/// when `S4` is not Schur.
pub fn extract_ruio(
    sol: &DesignSolution,
    pd: &PartitionedData,
    measured_outputs: usize,
    cfg: &DesignConfig,
) -> Result<(Ruio, DesignSolution), DesignError> {
    let (ok, _) = is_schur(&sol.blocks.s4, cfg.stability_margin)?;
    let sol = if ok {
        sol.clone()
    } else {
        let w = stabilize_with_margin(&sol.particular.columns(pd.m() + 2 * pd.p(), sol.particular.nrows()).into_owned(), &sol.s4_projector(), cfg.stability_margin)?;
        sol.with_w(w)?
    };
    let (ok, rho) = is_schur(&sol.blocks.s4, cfg.stability_margin)?;
    if !ok {
        return Err(DesignError::StabilizationFailed { spectral_radius: rho });
    }
    Ok((sol.to_ruio(pd, measured_outputs)?, sol))
}

/// Numbers worth keeping next to a data-driven observer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignDiagnostics {
    pub spectral_radius: f64,
    pub design_residual: f64,
    pub identification_residual: f64,
    pub split_residual: f64,
    /// Frobenius norm of the free parameter actually used.
    pub w_norm: f64,
    pub dependent_output_rows: Vec<usize>,
    pub assumption: AssumptionReport,
    pub kernel_inclusion: KernelInclusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenDesign {
    pub ruio: Ruio,
    pub solution: DesignSolution,
    pub identification: Identification,
    pub partitioned: PartitionedData,
    pub diagnostics: DesignDiagnostics,
}

/// Data-only synthesis: identify `C`, split the state data, solve the
/// design equation and stabilize.
pub fn design_from_data(hd: &HistoricalData, cfg: &DesignConfig) -> Result<DataDrivenDesign, DesignError> {
    let assumption = check_assumption(hd, cfg.rank_rtol)?;
    let identification = identify_c(hd, cfg.rank_rtol)?;
    let pd = partition_data(hd, &identification)?;
    let kernel_inclusion = check_kernel_inclusion(&pd, cfg.rank_rtol)?;
    if !kernel_inclusion.reduced {
        return Err(DesignError::NoAcceptor);
    }
    let sol = solve_design_equation(&pd, cfg)?;
    let (ruio, solution) = extract_ruio(&sol, &pd, hd.p(), cfg)?;
    let diagnostics = DesignDiagnostics {
        spectral_radius: ruio.spectral_radius()?,
        design_residual: solution.residual(&pd.xf1),
        identification_residual: identification.residual,
        split_residual: pd.split_residual(),
        w_norm: solution.w.norm(),
        dependent_output_rows: identification.dependent_rows.clone(),
        assumption,
        kernel_inclusion,
    };
    Ok(DataDrivenDesign {
        ruio,
        solution,
        identification,
        partitioned: pd,
        diagnostics,
    })
}

/// [`design_from_data`] on a recorded trajectory.
pub fn design_from_trajectory(traj: &Trajectory, cfg: &DesignConfig) -> Result<DataDrivenDesign, DesignError> {
    design_from_data(&build(traj)?, cfg)
}

/// Cross-check of the data-driven design against the generating plant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub existence: ExistenceReport,
    /// `Ok(())` or the display form of the design error.
    pub design_outcome: Result<(), String>,
    /// Acceptor residuals of the data-driven observer against the true plant.
    pub residuals: Option<ConditionResiduals>,
    /// Residuals within tolerance whenever a design was produced.
    pub acceptor_equations_hold: Option<bool>,
    /// Model-based existence agrees with data-driven success.
    pub existence_agrees: Option<bool>,
}

impl EquivalenceReport {
    pub fn consistent(&self) -> bool {
        self.acceptor_equations_hold.unwrap_or(true) && self.existence_agrees.unwrap_or(true)
    }
}

/// Compares the data-driven route with the model-based conditions on the
/// plant that generated the data.
pub fn verify_equivalence(sys: &LtiSystem, hd: &HistoricalData, cfg: &DesignConfig) -> EquivalenceReport {
    let mut existence = check_existence_model_based(sys, cfg);
    let design = design_from_data(hd, cfg);
    if let Ok(a) = check_assumption(hd, cfg.rank_rtol) {
        existence.assumption_ok = a.holds();
    }
    if let Ok(id) = identify_c(hd, cfg.rank_rtol) {
        if let Ok(pd) = partition_data(hd, &id) {
            if let Ok(k) = check_kernel_inclusion(&pd, cfg.rank_rtol) {
                existence.kernel_inclusion_ok = Some(k.reduced);
                existence.kernel_inclusion_full_ok = Some(k.full);
            }
        }
    }
    let (design_outcome, residuals) = match &design {
        Ok(dd) => {
            let res = partition_like(sys, &dd.ruio.permutation, &dd.ruio.output_rows)
                .and_then(|ps| condition_residuals(&ps, &dd.ruio))
                .ok();
            (Ok(()), res)
        }
        Err(e) => (Err(e.to_string()), None),
    };
    let acceptor_equations_hold = match (&design, residuals) {
        (Ok(_), Some(r)) => Some(r.acceptor_holds(cfg.residual_tol)),
        (Ok(_), None) => Some(false),
        (Err(_), _) => None,
    };
    let existence_agrees = existence
        .model_conditions_hold()
        .map(|ok| ok == design.is_ok());
    EquivalenceReport {
        existence,
        design_outcome,
        residuals,
        acceptor_equations_hold,
        existence_agrees,
    }
}
