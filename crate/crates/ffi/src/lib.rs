//! C ABI for designing and running reduced-order unknown-input observers.
//!
//! Every object crosses the boundary as an opaque handle owned by the caller
//! and released with the matching `*_free` function. Entry points return a
//! [`RuioStatus`]; on failure a message is kept per thread and can be read
//! with [`ruio_last_error_message`].
//!
//! Matrices are passed as row-major `double` arrays.
//!
//! # Safety
//!
//! All pointer arguments are either null or valid for the stated length.
//! Handles must come from this library and must not be used after being
//! freed. Null pointers are reported as `RuioStatus::NullPointer`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ruio_core::design::{design_from_trajectory, design_model_based, DesignConfig, DesignError, Ruio};
use ruio_core::io::{
    design_diagnostics, observer_from_json, observer_to_json, system_from_json, trajectory_from_csv,
    trajectory_to_csv, IoError,
};
use ruio_core::lti::{generate_experiment, ExperimentConfig, LtiSystem, Trajectory};
use ruio_core::numerics::{Matrix, Vector};
use ruio_core::runtime::{estimate, step, ObserverState, RuntimeError};

/// Result code of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuioStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Parse = 4,
    /// The data or model admits no observer (rank or kernel conditions fail).
    Existence = 5,
    /// Observers exist but none of them is Schur stable.
    Stabilization = 6,
    Numerics = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Plant `x+ = A x + B u + E d`, `y = C x`.
pub struct RuioSystem(LtiSystem);

/// Recorded input, disturbance, state and output samples.
pub struct RuioTrajectory(Trajectory);

/// A designed observer.
pub struct RuioObserver {
    ruio: Ruio,
    diagnostics: serde_json::Value,
}

/// An observer together with its running state `z`.
pub struct RuioEstimator {
    ruio: Ruio,
    state: ObserverState,
}

/// Design tolerances; see [`ruio_design_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RuioDesignConfig {
    pub rank_rtol: f64,
    pub residual_tol: f64,
    pub stability_margin: f64,
}

/// Dimensions of an observer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RuioObserverDims {
    /// Plant state dimension.
    pub n: usize,
    /// Input dimension.
    pub m: usize,
    /// Length of the measured output vector.
    pub p: usize,
    /// Observer order `n - rank(C)`.
    pub order: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: RuioStatus,
    message: String,
}

impl Failure {
    fn new(status: RuioStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        let status = if e.is_existence_failure() {
            RuioStatus::Existence
        } else if e.is_stabilization_failure() {
            RuioStatus::Stabilization
        } else if matches!(e, DesignError::Dimension(_)) {
            RuioStatus::DimensionMismatch
        } else {
            RuioStatus::Numerics
        };
        Failure::new(status, e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Design(d) => d.into(),
            other => Failure::new(RuioStatus::Parse, other.to_string()),
        }
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure and converts panics into `RuioStatus::Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RuioStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            RuioStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            RuioStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(RuioStatus::NullPointer, format!("{what} is null")))
}

unsafe fn reference_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(RuioStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(RuioStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::new(RuioStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    let c = reference(p, what)?;
    CStr::from_ptr(c)
        .to_str()
        .map_err(|_| Failure::new(RuioStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn row_major(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Failure> {
    Ok(Matrix::from_row_slice(rows, cols, slice(p, rows * cols, what)?))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = reference_mut(out, "output handle")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `text` plus a NUL terminator into `buf`; `required` always gets
/// the size needed including the terminator.
unsafe fn write_string(text: &str, buf: *mut c_char, len: usize, required: *mut usize) -> Result<(), Failure> {
    let needed = text.len() + 1;
    if let Some(r) = required.as_mut() {
        *r = needed;
    }
    if buf.is_null() || len < needed {
        return Err(Failure::new(
            RuioStatus::BufferTooSmall,
            format!("buffer holds {len} bytes, {needed} needed"),
        ));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

fn config(cfg: Option<&RuioDesignConfig>) -> Result<DesignConfig, Failure> {
    let Some(c) = cfg else {
        return Ok(DesignConfig::default());
    };
    if !(c.rank_rtol.is_finite() && c.rank_rtol > 0.0) {
        return Err(Failure::new(RuioStatus::InvalidArgument, "rank_rtol must be positive"));
    }
    if !(c.residual_tol.is_finite() && c.residual_tol > 0.0) {
        return Err(Failure::new(RuioStatus::InvalidArgument, "residual_tol must be positive"));
    }
    if !(0.0..1.0).contains(&c.stability_margin) {
        return Err(Failure::new(RuioStatus::InvalidArgument, "stability_margin must lie in [0, 1)"));
    }
    Ok(DesignConfig {
        rank_rtol: c.rank_rtol,
        residual_tol: c.residual_tol,
        stability_margin: c.stability_margin,
    })
}

/// Copies the message of the last failed call on this thread into `buf`.
///
/// Returns the number of bytes needed including the terminator, or 0 when
/// the last call succeeded. Passing a null `buf` only queries the size.
#[no_mangle]
pub unsafe extern "C" fn ruio_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Library defaults for the design tolerances.
#[no_mangle]
pub extern "C" fn ruio_design_config_default() -> RuioDesignConfig {
    let d = DesignConfig::default();
    RuioDesignConfig {
        rank_rtol: d.rank_rtol,
        residual_tol: d.residual_tol,
        stability_margin: d.stability_margin,
    }
}

/// Builds a plant from row-major `A` (n x n), `B` (n x m), `E` (n x q) and
/// `C` (p x n).
#[no_mangle]
pub unsafe extern "C" fn ruio_system_new(
    n: usize,
    m: usize,
    q: usize,
    p: usize,
    a: *const f64,
    b: *const f64,
    e: *const f64,
    c: *const f64,
    out: *mut *mut RuioSystem,
) -> RuioStatus {
    guard(|| {
        let sys = LtiSystem::new(
            row_major(a, n, n, "A")?,
            row_major(b, n, m, "B")?,
            row_major(e, n, q, "E")?,
            row_major(c, p, n, "C")?,
        )
        .map_err(|e| Failure::new(RuioStatus::InvalidArgument, e.to_string()))?;
        store(out, RuioSystem(sys))
    })
}

/// Parses a plant from the JSON system format used by the CLI.
#[no_mangle]
pub unsafe extern "C" fn ruio_system_from_json(json: *const c_char, out: *mut *mut RuioSystem) -> RuioStatus {
    guard(|| store(out, RuioSystem(system_from_json(string(json, "json")?)?)))
}

/// Writes `n`, `m`, `q`, `p`; any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn ruio_system_dims(
    sys: *const RuioSystem,
    n: *mut usize,
    m: *mut usize,
    q: *mut usize,
    p: *mut usize,
) -> RuioStatus {
    guard(|| {
        let s = &reference(sys, "system")?.0;
        for (ptr, v) in [(n, s.n()), (m, s.m()), (q, s.q()), (p, s.p())] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ruio_system_free(sys: *mut RuioSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Simulates a randomly excited experiment with `samples` recorded states,
/// inputs in [-5, 5] and disturbances in [-2, 2].
#[no_mangle]
pub unsafe extern "C" fn ruio_trajectory_generate(
    sys: *const RuioSystem,
    samples: usize,
    seed: u64,
    out: *mut *mut RuioTrajectory,
) -> RuioStatus {
    guard(|| {
        let s = &reference(sys, "system")?.0;
        let exp = generate_experiment(s, &ExperimentConfig::new(samples, seed))
            .map_err(|e| Failure::new(RuioStatus::InvalidArgument, e.to_string()))?;
        store(out, RuioTrajectory(exp.trajectory))
    })
}

/// Parses a trajectory from the CSV format used by the CLI.
#[no_mangle]
pub unsafe extern "C" fn ruio_trajectory_from_csv(csv: *const c_char, out: *mut *mut RuioTrajectory) -> RuioStatus {
    guard(|| store(out, RuioTrajectory(trajectory_from_csv(string(csv, "csv")?)?)))
}

/// Serializes a trajectory as CSV. See [`ruio_observer_to_json`] for the
/// buffer protocol.
#[no_mangle]
pub unsafe extern "C" fn ruio_trajectory_to_csv(
    traj: *const RuioTrajectory,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> RuioStatus {
    guard(|| {
        let text = trajectory_to_csv(&reference(traj, "trajectory")?.0)?;
        write_string(&text, buf, len, required)
    })
}

/// Number of recorded output samples `N + 1`.
#[no_mangle]
pub unsafe extern "C" fn ruio_trajectory_samples(traj: *const RuioTrajectory, samples: *mut usize) -> RuioStatus {
    guard(|| {
        let t = &reference(traj, "trajectory")?.0;
        *reference_mut(samples, "samples")? = t.y.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ruio_trajectory_free(traj: *mut RuioTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Designs an observer from recorded data. `cfg` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn ruio_design_from_trajectory(
    traj: *const RuioTrajectory,
    cfg: *const RuioDesignConfig,
    out: *mut *mut RuioObserver,
) -> RuioStatus {
    guard(|| {
        let t = &reference(traj, "trajectory")?.0;
        let dd = design_from_trajectory(t, &config(cfg.as_ref())?)?;
        let diagnostics = design_diagnostics(&dd);
        store(
            out,
            RuioObserver {
                ruio: dd.ruio,
                diagnostics,
            },
        )
    })
}

/// Designs an observer from known plant matrices. `cfg` may be null.
#[no_mangle]
pub unsafe extern "C" fn ruio_design_from_model(
    sys: *const RuioSystem,
    cfg: *const RuioDesignConfig,
    out: *mut *mut RuioObserver,
) -> RuioStatus {
    guard(|| {
        let s = &reference(sys, "system")?.0;
        let ruio = design_model_based(s, &config(cfg.as_ref())?)?;
        store(
            out,
            RuioObserver {
                ruio,
                diagnostics: serde_json::Value::Null,
            },
        )
    })
}

/// Parses an observer from the JSON format written by `ruio design`.
#[no_mangle]
pub unsafe extern "C" fn ruio_observer_from_json(json: *const c_char, out: *mut *mut RuioObserver) -> RuioStatus {
    guard(|| {
        let ruio = observer_from_json(string(json, "json")?)?;
        store(
            out,
            RuioObserver {
                ruio,
                diagnostics: serde_json::Value::Null,
            },
        )
    })
}

/// Serializes an observer as JSON into `buf`.
///
/// `required` (nullable) receives the size including the terminator. When
/// `buf` is null or shorter than that, nothing is written and
/// `RuioStatus::BufferTooSmall` is returned.
#[no_mangle]
pub unsafe extern "C" fn ruio_observer_to_json(
    obs: *const RuioObserver,
    buf: *mut c_char,
    len: usize,
    required: *mut usize,
) -> RuioStatus {
    guard(|| {
        let o = reference(obs, "observer")?;
        write_string(&observer_to_json(&o.ruio, o.diagnostics.clone()), buf, len, required)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ruio_observer_dims(obs: *const RuioObserver, dims: *mut RuioObserverDims) -> RuioStatus {
    guard(|| {
        let r = &reference(obs, "observer")?.ruio;
        *reference_mut(dims, "dims")? = RuioObserverDims {
            n: r.n(),
            m: r.m(),
            p: r.measured_outputs,
            order: r.order(),
        };
        Ok(())
    })
}

/// Spectral radius of the observer state matrix.
#[no_mangle]
pub unsafe extern "C" fn ruio_observer_spectral_radius(obs: *const RuioObserver, rho: *mut f64) -> RuioStatus {
    guard(|| {
        let r = &reference(obs, "observer")?.ruio;
        *reference_mut(rho, "rho")? = r
            .spectral_radius()
            .map_err(|e| Failure::new(RuioStatus::Numerics, e.to_string()))?;
        Ok(())
    })
}

/// Copies the row-major `order x order` observer state matrix into `out`.
#[no_mangle]
pub unsafe extern "C" fn ruio_observer_state_matrix(obs: *const RuioObserver, out: *mut f64, len: usize) -> RuioStatus {
    guard(|| {
        let a = &reference(obs, "observer")?.ruio.a_uio;
        let k = a.nrows();
        if len != k * k {
            return Err(Failure::new(
                RuioStatus::DimensionMismatch,
                format!("output holds {len} values, {} needed", k * k),
            ));
        }
        let dst = slice_mut(out, len, "out")?;
        for i in 0..k {
            for j in 0..k {
                dst[i * k + j] = a[(i, j)];
            }
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ruio_observer_free(obs: *mut RuioObserver) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

/// Starts an estimator from `z = 0`. The observer is copied, so it may be
/// freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn ruio_estimator_new(obs: *const RuioObserver, out: *mut *mut RuioEstimator) -> RuioStatus {
    guard(|| {
        let ruio = reference(obs, "observer")?.ruio.clone();
        let state = ObserverState::zeros(&ruio);
        store(out, RuioEstimator { ruio, state })
    })
}

/// Sets `z` to the `order` values in `z`, or to zero when `z` is null.
#[no_mangle]
pub unsafe extern "C" fn ruio_estimator_reset(est: *mut RuioEstimator, z: *const f64, len: usize) -> RuioStatus {
    guard(|| {
        let e = reference_mut(est, "estimator")?;
        if z.is_null() {
            e.state = ObserverState::zeros(&e.ruio);
            return Ok(());
        }
        if len != e.ruio.order() {
            return Err(Failure::new(
                RuioStatus::DimensionMismatch,
                format!("z has {len} entries, observer order is {}", e.ruio.order()),
            ));
        }
        e.state = ObserverState {
            z: Vector::from_column_slice(slice(z, len, "z")?),
        };
        Ok(())
    })
}

/// Writes the estimate `x̂(t)` for the current `z` and output `y(t)`, then
/// advances `z` with `u(t)`. `xhat` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ruio_estimator_step(
    est: *mut RuioEstimator,
    u: *const f64,
    u_len: usize,
    y: *const f64,
    y_len: usize,
    xhat: *mut f64,
    xhat_len: usize,
) -> RuioStatus {
    guard(|| {
        let e = reference_mut(est, "estimator")?;
        check_len(xhat_len, e.ruio.n(), "xhat")?;
        let u = Vector::from_column_slice(slice(u, u_len, "u")?);
        let y = Vector::from_column_slice(slice(y, y_len, "y")?);
        let (next, x) = step(&e.ruio, &e.state, &u, &y).map_err(dimension)?;
        slice_mut(xhat, xhat_len, "xhat")?.copy_from_slice(x.as_slice());
        e.state = next;
        Ok(())
    })
}

/// Writes the estimate for output `y` without advancing the state.
#[no_mangle]
pub unsafe extern "C" fn ruio_estimator_estimate(
    est: *const RuioEstimator,
    y: *const f64,
    y_len: usize,
    xhat: *mut f64,
    xhat_len: usize,
) -> RuioStatus {
    guard(|| {
        let e = reference(est, "estimator")?;
        check_len(xhat_len, e.ruio.n(), "xhat")?;
        let y = Vector::from_column_slice(slice(y, y_len, "y")?);
        let x = estimate(&e.ruio, &e.state, &y).map_err(dimension)?;
        slice_mut(xhat, xhat_len, "xhat")?.copy_from_slice(x.as_slice());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ruio_estimator_free(est: *mut RuioEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure::new(
            RuioStatus::DimensionMismatch,
            format!("{what} has {got} entries, expected {want}"),
        ))
    }
}

fn dimension(e: RuntimeError) -> Failure {
    let status = match e {
        RuntimeError::NonFinite { .. } => RuioStatus::Numerics,
        _ => RuioStatus::DimensionMismatch,
    };
    Failure::new(status, e.to_string())
}
