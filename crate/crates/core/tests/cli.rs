mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::dmatrix;
use ruio_core::example::example_system;
use ruio_core::io::{read_trajectory, write_system, write_trajectory};
use ruio_core::lti::LtiSystem;
use tempfile::TempDir;

fn ruio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruio"))
        .args(args)
        .env_remove("RUIO_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn system(&self, name: &str, sys: &LtiSystem) -> PathBuf {
        let path = self.path(name);
        write_system(&path, sys).unwrap();
        path
    }

    fn example_data(&self, seed: &str) -> (PathBuf, PathBuf) {
        let sys = self.system("example.json", &example_system());
        let traj = self.path(&format!("example_{seed}.csv"));
        let o = ruio(&["generate", p(&sys), "--steps", "11", "--seed", seed, "--out", p(&traj)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (sys, traj)
    }
}

#[test]
fn generate_example_reports_full_rank() {
    let ws = Workspace::new();
    let sys = ws.system("example.json", &example_system());
    let traj = ws.path("t.csv");
    let o = ruio(&[
        "generate", p(&sys), "--steps", "11", "--u-range", "-5", "5", "--d-range", "-2", "2", "--seed", "7",
        "--out", p(&traj),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["assumption"]["holds"], true);
    assert_eq!(report["assumption"]["observed_rank"], 9);
    let t = read_trajectory(&traj).unwrap();
    assert_eq!(t.samples(), 11);
    assert_eq!(t.steps(), 10);
}

#[test]
fn generate_short_experiment_warns_but_succeeds() {
    let ws = Workspace::new();
    let sys = ws.system("example.json", &example_system());
    let o = ruio(&["generate", p(&sys), "--steps", "3", "--out", p(&ws.path("t.csv"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn generate_missing_system_file_fails_with_usage_code() {
    let ws = Workspace::new();
    let o = ruio(&["generate", p(&ws.path("nope.json")), "--steps", "11", "--out", p(&ws.path("t.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(ruio(&["design", "--bogus"]).status.code(), Some(1));
    assert_eq!(ruio(&["--help"]).status.code(), Some(0));
}

#[test]
fn seed_environment_variable_overrides_flag() {
    let ws = Workspace::new();
    let sys = ws.system("example.json", &example_system());
    let run = |seed_flag: &str, env: Option<&str>, out: &Path| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ruio"));
        cmd.args(["generate", p(&sys), "--steps", "11", "--seed", seed_flag, "--out", p(out)]);
        match env {
            Some(v) => cmd.env("RUIO_SEED", v),
            None => cmd.env_remove("RUIO_SEED"),
        };
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    let a = run("1", None, &ws.path("a.csv"));
    let b = run("2", Some("1"), &ws.path("b.csv"));
    let c = run("2", None, &ws.path("c.csv"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn check_example_is_green() {
    let ws = Workspace::new();
    let (sys, traj) = ws.example_data("3");
    let o = ruio(&["check", p(&traj), p(&sys)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["assumption"]["holds"], true);
    assert_eq!(report["kernel_inclusion"]["reduced"], true);
    assert_eq!(report["kernel_inclusion"]["full"], true);
    assert_eq!(report["model_conditions"]["rank_ce_ok"], true);
    assert_eq!(report["model_conditions"]["strong_star_ok"], true);
    assert_eq!(report["equivalence"]["consistent"], true);
}

#[test]
fn check_monte_carlo_reports_consistency() {
    let ws = Workspace::new();
    let (sys, traj) = ws.example_data("3");
    let o = ruio(&["check", p(&traj), p(&sys), "--monte-carlo", "8", "--seed", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["monte_carlo"]["trials"], 8);
    assert_eq!(report["monte_carlo"]["consistent"], 8);
}

#[test]
fn check_without_disturbance_columns_is_unverifiable() {
    let ws = Workspace::new();
    let (_, traj) = ws.example_data("3");
    let mut t = read_trajectory(&traj).unwrap();
    t.d = None;
    let stripped = ws.path("no_d.csv");
    write_trajectory(&stripped, &t).unwrap();
    let o = ruio(&["check", p(&stripped)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["assumption"]["status"], "unverifiable");
    assert_eq!(report["model_conditions"], "unavailable");
    assert_eq!(report["kernel_inclusion"]["reduced"], true);
}

#[test]
fn check_and_design_reject_disturbance_in_output_kernel() {
    let ws = Workspace::new();
    let sys = LtiSystem::new(
        dmatrix![0.5, 0.1, 0.0; 0.0, 0.4, 0.2; 0.1, 0.0, 0.3],
        dmatrix![1.0; 0.5; 0.0],
        dmatrix![1.0; 0.0; 0.0],
        dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0],
    )
    .unwrap();
    let sys_path = ws.system("ce0.json", &sys);
    let traj = ws.path("ce0.csv");
    assert_eq!(
        ruio(&["generate", p(&sys_path), "--steps", "14", "--out", p(&traj)]).status.code(),
        Some(0)
    );
    let o = ruio(&["check", p(&traj), p(&sys_path)]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["model_conditions"]["rank_ce_ok"], false);
    let o = ruio(&["design", p(&traj), "--out", p(&ws.path("obs.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn design_rejects_undetectable_plant_with_certificate() {
    let ws = Workspace::new();
    let sys = LtiSystem::new(
        dmatrix![1.3, 0.4, 0.0; 0.0, 0.5, 0.1; 0.0, 0.2, 0.3],
        dmatrix![1.0; 1.0; 1.0],
        dmatrix![0.0; 0.0; 1.0],
        dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0],
    )
    .unwrap();
    let sys_path = ws.system("undetectable.json", &sys);
    let traj = ws.path("u.csv");
    assert_eq!(
        ruio(&["generate", p(&sys_path), "--steps", "14", "--u-range", "-1", "1", "--out", p(&traj)])
            .status
            .code(),
        Some(0)
    );
    let o = ruio(&["design", p(&traj), "--out", p(&ws.path("obs.json"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("1.3"), "{}", stderr(&o));
}

#[test]
fn design_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    let (_, traj) = ws.example_data("5");
    let a = ws.path("a.json");
    let b = ws.path("b.json");
    assert_eq!(ruio(&["design", p(&traj), "--out", p(&a)]).status.code(), Some(0));
    assert_eq!(ruio(&["design", p(&traj), "--out", p(&b)]).status.code(), Some(0));
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    let observer: serde_json::Value = serde_json::from_slice(&a).unwrap();
    for key in ["A_UIO", "B_u", "B_y", "D_UIO", "C1", "C2", "permutation", "diagnostics"] {
        assert!(observer.get(key).is_some(), "missing {key}");
    }
    assert!(observer["diagnostics"]["spectral_radius"].as_f64().unwrap() < 1.0);
}

#[test]
fn design_rejects_tampered_future_states() {
    let ws = Workspace::new();
    let (_, traj) = ws.example_data("5");
    let mut t = read_trajectory(&traj).unwrap();
    let last = t.x.as_mut().unwrap().last_mut().unwrap();
    last[0] += 1.0;
    last[1] -= 2.0;
    let tampered = ws.path("tampered.csv");
    write_trajectory(&tampered, &t).unwrap();
    let o = ruio(&["design", p(&tampered), "--out", p(&ws.path("obs.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_from_exact_state_gives_zero_trace() {
    let ws = Workspace::new();
    let (sys, traj) = ws.example_data("5");
    let observer = ws.path("obs.json");
    assert_eq!(ruio(&["design", p(&traj), "--out", p(&observer)]).status.code(), Some(0));
    let test = ws.path("test.csv");
    let o = ruio(&[
        "generate", p(&sys), "--steps", "15", "--seed", "77", "--input", "cosine-ramp", "--out", p(&test),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let errors = ws.path("errors.csv");
    let estimates = ws.path("xhat.csv");
    let o = ruio(&[
        "run", p(&observer), p(&test), "--z0", "exact", "--out", p(&errors), "--estimates", p(&estimates),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let scale = read_trajectory(&test)
        .unwrap()
        .x
        .unwrap()
        .iter()
        .map(|v| v.norm())
        .fold(1.0, f64::max);
    assert!(report["max_error_norm"].as_f64().unwrap() <= 1e-9 * scale);

    let text = std::fs::read_to_string(&errors).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,e_0,e_1,e_2,e_3,e_4,norm_e,norm_e1,norm_e2");
    assert_eq!(lines.count(), 15);
    let text = std::fs::read_to_string(&estimates).unwrap();
    assert!(text.starts_with("t,xhat_0,xhat_1,xhat_2,xhat_3,xhat_4\n"));
}

#[test]
fn run_from_zero_state_reports_decay() {
    let ws = Workspace::new();
    let (sys, traj) = ws.example_data("5");
    let observer = ws.path("obs.json");
    assert_eq!(ruio(&["design", p(&traj), "--out", p(&observer)]).status.code(), Some(0));
    let test = ws.path("test.csv");
    assert_eq!(
        ruio(&["generate", p(&sys), "--steps", "13", "--seed", "8", "--out", p(&test)]).status.code(),
        Some(0)
    );
    let o = ruio(&["run", p(&observer), p(&test)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rate = report["measured_decay_rate"].as_f64().unwrap();
    assert!(rate < 1.0, "rate {rate}");
    assert!(report["final_error_norm"].as_f64().unwrap() < report["max_error_norm"].as_f64().unwrap());
}

#[test]
fn run_with_mismatched_dimensions_fails() {
    let ws = Workspace::new();
    let (_, traj) = ws.example_data("5");
    let observer = ws.path("obs.json");
    assert_eq!(ruio(&["design", p(&traj), "--out", p(&observer)]).status.code(), Some(0));
    let other = LtiSystem::new(
        dmatrix![0.5, 0.0; 0.0, 0.5],
        dmatrix![1.0; 1.0],
        dmatrix![1.0; 0.0],
        dmatrix![1.0, 0.0],
    )
    .unwrap();
    let other_sys = ws.system("other.json", &other);
    let other_traj = ws.path("other.csv");
    assert_eq!(
        ruio(&["generate", p(&other_sys), "--steps", "6", "--out", p(&other_traj)]).status.code(),
        Some(0)
    );
    let o = ruio(&["run", p(&observer), p(&other_traj)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_tolerances_are_rejected() {
    let ws = Workspace::new();
    let (_, traj) = ws.example_data("5");
    let o = ruio(&["design", p(&traj), "--out", p(&ws.path("o.json")), "--stability-margin", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = ruio(&["design", p(&traj), "--out", p(&ws.path("o.json")), "--rank-rtol", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}
