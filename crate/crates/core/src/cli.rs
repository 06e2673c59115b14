//! Batch front-end: `generate`, `check`, `design` and `run`.
//!
//! Exit codes: 0 success, 1 usage or I/O problems, 2 the observer provably
//! does not exist, 3 no Schur-stable member of the solution family.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::data::{build, check_assumption, identify_c, partition_data, DataError};
use crate::design::{
    check_existence_model_based, check_kernel_inclusion, design_from_data, verify_equivalence, DesignConfig,
    DesignError,
};
use crate::io::{self, IoError};
use crate::lti::{cosine_ramp_input, generate_experiment, simulate, ExperimentConfig, Trajectory};
use crate::numerics::Vector;
use crate::runtime::{self, ObserverState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EXISTENCE: i32 = 2;
pub const EXIT_STABILIZATION: i32 = 3;

/// Environment variable that takes precedence over `--seed`.
pub const SEED_ENV: &str = "RUIO_SEED";

#[derive(Debug, Parser)]
#[command(name = "ruio", version, about = "Reduced-order unknown-input observer toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub tolerances: Tolerances,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Tolerances {
    /// Relative rank tolerance for data matrices.
    #[arg(long, global = true, default_value_t = crate::data::DATA_RANK_RTOL)]
    pub rank_rtol: f64,
    /// Relative residual tolerance for verification checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub residual_tol: f64,
    /// Required distance of observer poles from the unit circle.
    #[arg(long, global = true, default_value_t = 0.0)]
    pub stability_margin: f64,
}

impl Tolerances {
    fn to_config(&self) -> Result<DesignConfig, CliError> {
        if !(self.rank_rtol > 0.0 && self.rank_rtol.is_finite()) {
            return Err(CliError::usage(format!("--rank-rtol must be positive, got {}", self.rank_rtol)));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(CliError::usage(format!(
                "--residual-tol must be positive, got {}",
                self.residual_tol
            )));
        }
        if !(0.0..1.0).contains(&self.stability_margin) {
            return Err(CliError::usage(format!(
                "--stability-margin must lie in [0, 1), got {}",
                self.stability_margin
            )));
        }
        Ok(DesignConfig {
            rank_rtol: self.rank_rtol,
            residual_tol: self.residual_tol,
            stability_margin: self.stability_margin,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// i.i.d. uniform samples from --u-range.
    Uniform,
    /// `[0.8 cos(0.2 t + 2); 3 t]` (two inputs only).
    CosineRamp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an offline experiment and write it as trajectory CSV.
    Generate {
        system: PathBuf,
        /// Number of recorded samples T.
        #[arg(long)]
        steps: usize,
        #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-5.0, 5.0])]
        u_range: Vec<f64>,
        #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-2.0, 2.0])]
        d_range: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = InputKind::Uniform)]
        input: InputKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the existence conditions for a recorded experiment.
    Check {
        trajectory: PathBuf,
        /// Generating plant; enables the model-based conditions.
        system: Option<PathBuf>,
        /// Repeat the data/model cross-check on N fresh experiments.
        #[arg(long, value_name = "N")]
        monte_carlo: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Design an observer from a recorded experiment.
    Design {
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an observer over a trajectory.
    Run {
        observer: PathBuf,
        trajectory: PathBuf,
        /// `zeros`, `exact` (needs states) or a CSV file with z_0..z_{r-1}.
        #[arg(long, default_value = "zeros")]
        z0: String,
        /// Error-trace CSV (needs states in the trajectory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Estimate CSV.
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Design(d) => d.into(),
            other => CliError::usage(other.to_string()),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        let code = if e.is_existence_failure() {
            EXIT_EXISTENCE
        } else if e.is_stabilization_failure() {
            EXIT_STABILIZATION
        } else {
            EXIT_USAGE
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        DesignError::from(e).into()
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize")
}

fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn range(v: &[f64], name: &str) -> Result<(f64, f64), CliError> {
    match v {
        [a, b] if a.is_finite() && b.is_finite() && a < b => Ok((*a, *b)),
        _ => Err(CliError::usage(format!("{name} needs two finite values A < B"))),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `out`, diagnostics to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = cli.tolerances.to_config()?;
    match &cli.command {
        Command::Generate {
            system,
            steps,
            u_range,
            d_range,
            seed,
            input,
            out: out_path,
        } => cmd_generate(
            system,
            *steps,
            range(u_range, "--u-range")?,
            range(d_range, "--d-range")?,
            effective_seed(*seed)?,
            *input,
            out_path,
            &cfg,
            out,
            err,
        ),
        Command::Check {
            trajectory,
            system,
            monte_carlo,
            seed,
        } => cmd_check(
            trajectory,
            system.as_deref(),
            *monte_carlo,
            effective_seed(*seed)?,
            &cfg,
            out,
        ),
        Command::Design { trajectory, out: out_path } => cmd_design(trajectory, out_path, &cfg, out),
        Command::Run {
            observer,
            trajectory,
            z0,
            out: out_path,
            estimates,
        } => cmd_run(observer, trajectory, z0, out_path.as_deref(), estimates.as_deref(), out),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_generate(
    system: &Path,
    samples: usize,
    u_range: (f64, f64),
    d_range: (f64, f64),
    seed: u64,
    input: InputKind,
    out_path: &Path,
    cfg: &DesignConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let sys = io::read_system(system)?;
    let mut exp_cfg = ExperimentConfig::new(samples, seed);
    exp_cfg.u_range = u_range;
    exp_cfg.d_range = d_range;
    let exp = generate_experiment(&sys, &exp_cfg).map_err(|e| CliError::usage(e.to_string()))?;
    let traj = match input {
        InputKind::Uniform => exp.trajectory,
        InputKind::CosineRamp => {
            if sys.m() != 2 {
                return Err(CliError::usage("--input cosine-ramp needs a plant with two inputs"));
            }
            let u = cosine_ramp_input(samples - 1);
            let x0 = exp.trajectory.x.as_ref().and_then(|x| x.first()).cloned().expect("simulated states");
            simulate(&sys, &x0, &u, exp.trajectory.d.as_deref()).map_err(|e| CliError::usage(e.to_string()))?
        }
    };
    for w in &exp.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    io::write_trajectory(out_path, &traj)?;
    let hd = build(&traj)?;
    let report = check_assumption(&hd, cfg.rank_rtol)?;
    if report.holds() == Some(false) {
        let _ = writeln!(err, "warning: the data rank assumption does not hold");
    }
    let _ = writeln!(out, "{}", pretty(&json!({ "assumption": report })));
    Ok(EXIT_OK)
}

fn data_checks(traj: &Trajectory, cfg: &DesignConfig) -> Result<(serde_json::Value, bool), CliError> {
    let hd = build(traj)?;
    let assumption = check_assumption(&hd, cfg.rank_rtol)?;
    let mut report = json!({ "assumption": assumption });
    let designable = match identify_c(&hd, cfg.rank_rtol) {
        Ok(id) => {
            report["identification"] = io::identification_report(&id, cfg.rank_rtol);
            match partition_data(&hd, &id) {
                Ok(pd) => {
                    let k = check_kernel_inclusion(&pd, cfg.rank_rtol)?;
                    report["kernel_inclusion"] = json!({ "reduced": k.reduced, "full": k.full });
                    k.reduced
                }
                Err(e) => {
                    report["identification_error"] = json!(e.to_string());
                    false
                }
            }
        }
        Err(e) => {
            report["identification_error"] = json!(e.to_string());
            false
        }
    };
    report["designable"] = json!(designable);
    Ok((report, designable))
}

pub fn cmd_check(
    trajectory: &Path,
    system: Option<&Path>,
    monte_carlo: Option<usize>,
    seed: u64,
    cfg: &DesignConfig,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let traj = io::read_trajectory(trajectory)?;
    let (mut report, designable) = data_checks(&traj, cfg)?;
    match system {
        Some(path) => {
            let sys = io::read_system(path)?;
            report["model_conditions"] = serde_json::to_value(check_existence_model_based(&sys, cfg))
                .expect("report serializes");
            let hd = build(&traj)?;
            let eq = verify_equivalence(&sys, &hd, cfg);
            report["equivalence"] = json!({
                "consistent": eq.consistent(),
                "existence_agrees": eq.existence_agrees,
                "acceptor_equations_hold": eq.acceptor_equations_hold,
                "residuals": eq.residuals,
                "design_outcome": match &eq.design_outcome { Ok(()) => "designed".to_string(), Err(e) => e.clone() },
            });
            if let Some(trials) = monte_carlo {
                let samples = traj.samples();
                let outcomes: Vec<bool> = (0..trials as u64)
                    .into_par_iter()
                    .map(|i| {
                        let exp_cfg = ExperimentConfig::new(samples, seed.wrapping_add(i));
                        generate_experiment(&sys, &exp_cfg)
                            .ok()
                            .and_then(|exp| build(&exp.trajectory).ok())
                            .map(|hd| verify_equivalence(&sys, &hd, cfg).consistent())
                            .unwrap_or(false)
                    })
                    .collect();
                let consistent = outcomes.iter().filter(|&&ok| ok).count();
                report["monte_carlo"] = json!({
                    "trials": trials,
                    "consistent": consistent,
                    "seed": seed,
                });
            }
        }
        None => {
            if monte_carlo.is_some() {
                return Err(CliError::usage("--monte-carlo needs the generating system file"));
            }
            report["model_conditions"] = json!("unavailable");
        }
    }
    let _ = writeln!(out, "{}", pretty(&report));
    Ok(if designable { EXIT_OK } else { EXIT_EXISTENCE })
}

pub fn cmd_design(trajectory: &Path, out_path: &Path, cfg: &DesignConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let traj = io::read_trajectory(trajectory)?;
    let hd = build(&traj)?;
    let dd = design_from_data(&hd, cfg)?;
    let diagnostics = io::design_diagnostics(&dd);
    io::write_observer(out_path, &dd.ruio, diagnostics.clone())?;
    let _ = writeln!(out, "{}", pretty(&diagnostics));
    Ok(EXIT_OK)
}

pub fn cmd_run(
    observer: &Path,
    trajectory: &Path,
    z0: &str,
    out_path: Option<&Path>,
    estimates_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let ruio = io::read_observer(observer)?;
    let traj = io::read_trajectory(trajectory)?;
    if traj.input_dim() != Some(ruio.m()) {
        return Err(CliError::usage(format!(
            "trajectory has {} inputs, observer expects {}",
            traj.input_dim().unwrap_or(0),
            ruio.m()
        )));
    }
    if traj.output_dim() != Some(ruio.measured_outputs) {
        return Err(CliError::usage(format!(
            "trajectory has {} outputs, observer expects {}",
            traj.output_dim().unwrap_or(0),
            ruio.measured_outputs
        )));
    }
    if let Some(n) = traj.state_dim() {
        if n != ruio.n() {
            return Err(CliError::usage(format!("trajectory has {n} states, observer expects {}", ruio.n())));
        }
    }
    let state = match z0 {
        "zeros" => ObserverState::zeros(&ruio),
        "exact" => {
            let x0 = traj
                .x
                .as_ref()
                .and_then(|x| x.first())
                .ok_or_else(|| CliError::usage("--z0 exact needs states in the trajectory"))?;
            runtime::exact_initial_state(&ruio, x0, &traj.y[0]).map_err(|e| CliError::usage(e.to_string()))?
        }
        path => {
            let z: Vector = io::z0_from_csv(&io::read_text(Path::new(path))?)?;
            ObserverState { z }
        }
    };
    let result = runtime::run(&ruio, &traj, &state).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = estimates_path {
        io::write_text(path, &io::estimates_to_csv(&result.estimates)?)?;
    }
    let rho = ruio.spectral_radius().map_err(|e| CliError::usage(e.to_string()))?;
    let mut report = json!({ "spectral_radius": rho, "samples": traj.samples() });
    match (&result.errors, out_path) {
        (Some(trace), path) => {
            if let Some(path) = path {
                io::write_text(path, &io::error_trace_to_csv(trace)?)?;
            }
            report["final_error_norm"] = json!(trace.final_norm());
            report["max_error_norm"] = json!(trace.max_norm());
            report["measured_decay_rate"] = json!(trace.measured_decay_rate(1e-12));
            report["max_recursion_residual"] = json!(trace.max_recursion_residual());
        }
        (None, Some(_)) => {
            return Err(CliError::usage("an error trace needs states in the trajectory"));
        }
        (None, None) => {}
    }
    let _ = writeln!(out, "{}", pretty(&report));
    Ok(EXIT_OK)
}
