//! Running a designed observer over measured inputs and outputs.

use thiserror::Error;

use crate::design::Ruio;
use crate::lti::Trajectory;
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sequence length mismatch: {0}")]
    Length(String),
    #[error("non-finite value in {signal} at t = {t}")]
    NonFinite { signal: &'static str, t: usize },
}

/// Internal observer state `z` (dimension `n - p`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub z: Vector,
}

impl ObserverState {
    pub fn zeros(ruio: &Ruio) -> Self {
        Self {
            z: Vector::zeros(ruio.order()),
        }
    }
}

fn check_len(v: &Vector, want: usize, what: &str) -> Result<(), RuntimeError> {
    if v.len() != want {
        return Err(RuntimeError::Dimension(format!("{what} has length {}, expected {want}", v.len())));
    }
    Ok(())
}

fn used_outputs(ruio: &Ruio, y: &Vector) -> Result<Vector, RuntimeError> {
    check_len(y, ruio.measured_outputs, "y")?;
    Ok(Vector::from_iterator(
        ruio.output_rows.len(),
        ruio.output_rows.iter().map(|&i| y[i]),
    ))
}

/// State estimate from `z` and `y`, in the plant's original state order.
pub fn estimate(ruio: &Ruio, state: &ObserverState, y: &Vector) -> Result<Vector, RuntimeError> {
    check_len(&state.z, ruio.order(), "z")?;
    let yr = used_outputs(ruio, y)?;
    let x1 = &state.z + &ruio.d_uio * &yr;
    let x2 = &ruio.c2_inv * (&yr - &ruio.c1 * &x1);
    let mut stacked = Vector::zeros(ruio.n());
    stacked.rows_mut(0, x1.len()).copy_from(&x1);
    stacked.rows_mut(x1.len(), x2.len()).copy_from(&x2);
    Ok(ruio.permutation.unpermute_vector(&stacked))
}

/// One observer update: returns `z(t+1)` and the estimate `x̂(t)`.
pub fn step(
    ruio: &Ruio,
    state: &ObserverState,
    u: &Vector,
    y: &Vector,
) -> Result<(ObserverState, Vector), RuntimeError> {
    check_len(u, ruio.m(), "u")?;
    let xhat = estimate(ruio, state, y)?;
    let yr = used_outputs(ruio, y)?;
    let z = &ruio.a_uio * &state.z + &ruio.b_u * u + &ruio.b_y * &yr;
    Ok((ObserverState { z }, xhat))
}

/// `z(0) = x1(0) - D y(0)`, the observer state that makes `e(0) = 0`.
pub fn exact_initial_state(ruio: &Ruio, x0: &Vector, y0: &Vector) -> Result<ObserverState, RuntimeError> {
    check_len(x0, ruio.n(), "x0")?;
    let yr = used_outputs(ruio, y0)?;
    let x1 = ruio.permutation.permute_vector(x0).rows(0, ruio.order()).into_owned();
    Ok(ObserverState {
        z: x1 - &ruio.d_uio * yr,
    })
}

/// Estimation error along a run, split as `e = [e1; e2]` in the observer's
/// state ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrace {
    /// `x(t) - x̂(t)` in the original state order.
    pub e: Vec<Vector>,
    pub e1: Vec<Vector>,
    pub e2: Vec<Vector>,
    pub norm_e: Vec<f64>,
    pub norm_e1: Vec<f64>,
    pub norm_e2: Vec<f64>,
    /// `||e1(t+1) - A_UIO e1(t)|| / (1 + ||e1(t)||)` per step.
    pub recursion_residual: Vec<f64>,
    /// Largest `||e2 + C2^{-1} C1 e1|| / (1 + ||e1||)` along the run.
    pub e2_identity_residual: f64,
}

impl ErrorTrace {
    fn new(ruio: &Ruio, x: &[Vector], xhat: &[Vector]) -> Self {
        let r = ruio.order();
        let p = ruio.p();
        let link = &ruio.c2_inv * &ruio.c1;
        let mut trace = ErrorTrace {
            e: Vec::with_capacity(x.len()),
            e1: Vec::with_capacity(x.len()),
            e2: Vec::with_capacity(x.len()),
            norm_e: Vec::with_capacity(x.len()),
            norm_e1: Vec::with_capacity(x.len()),
            norm_e2: Vec::with_capacity(x.len()),
            recursion_residual: Vec::with_capacity(x.len().saturating_sub(1)),
            e2_identity_residual: 0.0,
        };
        for (xt, xh) in x.iter().zip(xhat) {
            let e = xt - xh;
            let ep = ruio.permutation.permute_vector(&e);
            let e1 = ep.rows(0, r).into_owned();
            let e2 = ep.rows(r, p).into_owned();
            let id = (&e2 + &link * &e1).norm() / (1.0 + e1.norm());
            trace.e2_identity_residual = trace.e2_identity_residual.max(id);
            trace.norm_e.push(e.norm());
            trace.norm_e1.push(e1.norm());
            trace.norm_e2.push(e2.norm());
            trace.e.push(e);
            trace.e1.push(e1);
            trace.e2.push(e2);
        }
        for t in 1..trace.e1.len() {
            let pred = &ruio.a_uio * &trace.e1[t - 1];
            trace
                .recursion_residual
                .push((&trace.e1[t] - pred).norm() / (1.0 + trace.norm_e1[t - 1]));
        }
        trace
    }

    pub fn max_recursion_residual(&self) -> f64 {
        self.recursion_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.norm_e.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_norm(&self) -> f64 {
        self.norm_e.last().copied().unwrap_or(0.0)
    }

    /// Non-increasing envelope `max_{s >= t} ||e(s)||`.
    pub fn envelope(&self) -> Vec<f64> {
        let mut env = self.norm_e.clone();
        for t in (0..env.len().saturating_sub(1)).rev() {
            env[t] = env[t].max(env[t + 1]);
        }
        env
    }

    /// Geometric decay rate of the envelope between its peak and the last
    /// sample above `floor * peak`. `None` when no decay is observed.
    pub fn measured_decay_rate(&self, floor: f64) -> Option<f64> {
        let env = self.envelope();
        let peak = env.first().copied()?;
        if peak <= 0.0 || !peak.is_finite() {
            return None;
        }
        let last = env.iter().rposition(|&v| v > floor * peak)?;
        if last == 0 {
            return None;
        }
        Some((env[last] / peak).powf(1.0 / last as f64))
    }
}

/// Observer run over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// `x̂(t)` for every sample, original state order.
    pub estimates: Vec<Vector>,
    /// Final observer state after consuming all inputs.
    pub final_state: ObserverState,
    /// Present when the trajectory carries true states.
    pub errors: Option<ErrorTrace>,
}

/// Runs the observer from `z0` over all samples of `traj`.
///
/// The estimate is produced for each of the `T` output samples; the last one
/// uses no input.
pub fn run(ruio: &Ruio, traj: &Trajectory, z0: &ObserverState) -> Result<RunResult, RuntimeError> {
    traj.validate().map_err(|e| RuntimeError::Length(e.to_string()))?;
    check_len(&z0.z, ruio.order(), "z0")?;
    let mut state = z0.clone();
    let mut estimates = Vec::with_capacity(traj.samples());
    for (t, ut) in traj.u.iter().enumerate() {
        let (next, xhat) = step(ruio, &state, ut, &traj.y[t])?;
        if next.z.iter().any(|v| !v.is_finite()) {
            return Err(RuntimeError::NonFinite { signal: "z", t: t + 1 });
        }
        estimates.push(xhat);
        state = next;
    }
    let last = traj.y.last().expect("validated trajectory has outputs");
    estimates.push(estimate(ruio, &state, last)?);

    let errors = match &traj.x {
        Some(x) => {
            if let Some(x0) = x.first() {
                check_len(x0, ruio.n(), "x")?;
            }
            Some(ErrorTrace::new(ruio, x, &estimates))
        }
        None => None,
    };
    Ok(RunResult {
        estimates,
        final_state: state,
        errors,
    })
}

/// `||A^t||_2` for `t = 0..=horizon`, the worst-case error amplification.
pub fn power_norms(a: &Matrix, horizon: usize) -> Vec<f64> {
    let k = a.nrows();
    let mut power = Matrix::identity(k, k);
    let mut out = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        out.push(crate::numerics::singular_values(&power).first().copied().unwrap_or(0.0));
        power = a * power;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_from_trajectory, DesignConfig};
    use crate::example::example_system;
    use crate::lti::{generate_experiment, simulate, ExperimentConfig};

    fn designed() -> Ruio {
        let exp = generate_experiment(&example_system(), &ExperimentConfig::new(11, 1)).unwrap();
        design_from_trajectory(&exp.trajectory, &DesignConfig::default()).unwrap().ruio
    }

    fn short_run(steps: usize) -> Trajectory {
        let sys = example_system();
        let u: Vec<Vector> = (0..steps).map(|t| Vector::from_vec(vec![(t as f64).sin(), 0.5])).collect();
        let d: Vec<Vector> = (0..steps).map(|t| Vector::from_vec(vec![(0.7 * t as f64).cos(), -1.0])).collect();
        simulate(&sys, &Vector::from_vec(vec![1.0, -1.0, 0.5, 2.0, 0.0]), &u, Some(&d)).unwrap()
    }

    #[test]
    fn exact_start_gives_small_error() {
        let ruio = designed();
        let traj = short_run(15);
        let x = traj.x.as_ref().unwrap();
        let z0 = exact_initial_state(&ruio, &x[0], &traj.y[0]).unwrap();
        let res = run(&ruio, &traj, &z0).unwrap();
        let scale = x.iter().map(|v| v.norm()).fold(1.0, f64::max);
        assert!(res.errors.unwrap().max_norm() < 1e-9 * scale);
    }

    #[test]
    fn error_obeys_autonomous_recursion() {
        let ruio = designed();
        let traj = short_run(20);
        let res = run(&ruio, &traj, &ObserverState::zeros(&ruio)).unwrap();
        let trace = res.errors.unwrap();
        assert_eq!(trace.norm_e.len(), 21);
        assert_eq!(trace.recursion_residual.len(), 20);
        let scale = traj.x.as_ref().unwrap().iter().map(|v| v.norm()).fold(1.0, f64::max);
        assert!(trace.max_recursion_residual() < 1e-9 * scale);
        assert!(trace.e2_identity_residual < 1e-9 * scale);
    }

    #[test]
    fn estimate_without_states_has_no_trace() {
        let ruio = designed();
        let mut traj = short_run(5);
        traj.x = None;
        let res = run(&ruio, &traj, &ObserverState::zeros(&ruio)).unwrap();
        assert!(res.errors.is_none());
        assert_eq!(res.estimates.len(), 6);
    }

    #[test]
    fn wrong_output_length_rejected() {
        let ruio = designed();
        let state = ObserverState::zeros(&ruio);
        let err = step(&ruio, &state, &Vector::zeros(2), &Vector::zeros(2)).unwrap_err();
        assert!(matches!(err, RuntimeError::Dimension(_)));
    }

    #[test]
    fn envelope_is_non_increasing() {
        let trace = ErrorTrace {
            e: vec![],
            e1: vec![],
            e2: vec![],
            norm_e: vec![1.0, 3.0, 0.5, 0.7, 0.1],
            norm_e1: vec![],
            norm_e2: vec![],
            recursion_residual: vec![],
            e2_identity_residual: 0.0,
        };
        assert_eq!(trace.envelope(), vec![3.0, 3.0, 0.7, 0.7, 0.1]);
    }

    #[test]
    fn decay_rate_of_geometric_sequence() {
        let norms: Vec<f64> = (0..30).map(|t| 0.5f64.powi(t)).collect();
        let trace = ErrorTrace {
            e: vec![],
            e1: vec![],
            e2: vec![],
            norm_e: norms,
            norm_e1: vec![],
            norm_e2: vec![],
            recursion_residual: vec![],
            e2_identity_residual: 0.0,
        };
        let rate = trace.measured_decay_rate(1e-12).unwrap();
        assert!((rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_norms_start_at_one() {
        let a = nalgebra::dmatrix![0.5, 1.0; 0.0, 0.5];
        let pn = power_norms(&a, 3);
        assert_eq!(pn.len(), 4);
        assert!((pn[0] - 1.0).abs() < 1e-15);
    }
}
