//! File formats: system JSON, trajectory CSV, observer JSON, identification
//! report JSON, and the error/estimate CSVs written by observer runs.
//!
//! JSON numbers use the shortest representation that round-trips exactly.
//! Trajectory CSVs do the same so a saved experiment designs the same
//! observer as the in-memory one. Error and estimate CSVs carry 12
//! significant digits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Identification;
use crate::design::{DataDrivenDesign, DesignError, Ruio};
use crate::lti::{LtiSystem, ModelError, StatePermutation, Trajectory};
use crate::numerics::{matrix_from_rows, matrix_to_rows, Matrix, NumericsError, Vector};
use crate::runtime::ErrorTrace;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

type Rows = Vec<Vec<f64>>;

fn rows_to_matrix(name: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<Matrix, IoError> {
    if rows.len() != nrows {
        return Err(IoError::Format(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    matrix_from_rows(rows, ncols).map_err(|e| IoError::Format(format!("{name}: {e}")))
}

fn infer_cols(rows: &Rows, declared: Option<usize>, name: &str) -> Result<usize, IoError> {
    match (declared, rows.first()) {
        (Some(k), _) => Ok(k),
        (None, Some(r)) => Ok(r.len()),
        (None, None) => Err(IoError::Format(format!("cannot infer the column count of {name}"))),
    }
}

/// On-disk plant description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
}

impl From<&LtiSystem> for SystemFile {
    fn from(sys: &LtiSystem) -> Self {
        Self {
            n: Some(sys.n()),
            m: Some(sys.m()),
            q: Some(sys.q()),
            p: Some(sys.p()),
            a: matrix_to_rows(sys.a()),
            b: matrix_to_rows(sys.b()),
            e: matrix_to_rows(sys.e()),
            c: matrix_to_rows(sys.c()),
        }
    }
}

impl SystemFile {
    pub fn to_system(&self) -> Result<LtiSystem, IoError> {
        let n = match self.n {
            Some(n) => n,
            None => self.a.len(),
        };
        let m = infer_cols(&self.b, self.m, "B")?;
        let q = infer_cols(&self.e, self.q, "E")?;
        let p = self.p.unwrap_or(self.c.len());
        let a = rows_to_matrix("A", &self.a, n, n)?;
        let b = rows_to_matrix("B", &self.b, n, m)?;
        let e = rows_to_matrix("E", &self.e, n, q)?;
        let c = rows_to_matrix("C", &self.c, p, n)?;
        Ok(LtiSystem::new(a, b, e, c)?)
    }
}

pub fn system_to_json(sys: &LtiSystem) -> String {
    let mut s = serde_json::to_string_pretty(&SystemFile::from(sys)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn system_from_json(text: &str) -> Result<LtiSystem, IoError> {
    serde_json::from_str::<SystemFile>(text)?.to_system()
}

pub fn read_system(path: &Path) -> Result<LtiSystem, IoError> {
    system_from_json(&read_file(path)?)
}

pub fn write_system(path: &Path, sys: &LtiSystem) -> Result<(), IoError> {
    write_file(path, &system_to_json(sys))
}

fn push_header(header: &mut Vec<String>, prefix: &str, count: usize) {
    header.extend((0..count).map(|i| format!("{prefix}_{i}")));
}

fn push_values(record: &mut Vec<String>, v: &Vector) {
    record.extend(v.iter().map(|x| format!("{x}")));
}

pub fn trajectory_to_csv(traj: &Trajectory) -> Result<String, IoError> {
    traj.validate()?;
    let m = traj.input_dim().unwrap_or(0);
    let q = traj.disturbance_dim().unwrap_or(0);
    let n = traj.state_dim().unwrap_or(0);
    let p = traj.output_dim().unwrap_or(0);
    let mut header = Vec::new();
    push_header(&mut header, "u", m);
    if traj.d.is_some() {
        push_header(&mut header, "d", q);
    }
    if traj.x.is_some() {
        push_header(&mut header, "x", n);
    }
    push_header(&mut header, "y", p);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for t in 0..traj.samples() {
        let mut rec = Vec::with_capacity(header.len());
        match traj.u.get(t) {
            Some(u) => push_values(&mut rec, u),
            None => rec.extend(std::iter::repeat_n(String::new(), m)),
        }
        if let Some(d) = &traj.d {
            match d.get(t) {
                Some(d) => push_values(&mut rec, d),
                None => rec.extend(std::iter::repeat_n(String::new(), q)),
            }
        }
        if let Some(x) = &traj.x {
            push_values(&mut rec, &x[t]);
        }
        push_values(&mut rec, &traj.y[t]);
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

#[derive(Debug, Default)]
struct Layout {
    u: Vec<usize>,
    d: Vec<usize>,
    x: Vec<usize>,
    y: Vec<usize>,
}

fn parse_layout(header: &csv::StringRecord) -> Result<Layout, IoError> {
    let mut layout = Layout::default();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        let (prefix, index) = name
            .split_once('_')
            .ok_or_else(|| IoError::Format(format!("unexpected column {name:?}")))?;
        let index: usize = index
            .parse()
            .map_err(|_| IoError::Format(format!("unexpected column {name:?}")))?;
        let group = match prefix {
            "u" => &mut layout.u,
            "d" => &mut layout.d,
            "x" => &mut layout.x,
            "y" => &mut layout.y,
            _ => return Err(IoError::Format(format!("unexpected column {name:?}"))),
        };
        if index != group.len() {
            return Err(IoError::Format(format!("column {name:?} out of order")));
        }
        group.push(col);
    }
    if layout.y.is_empty() {
        return Err(IoError::Format("trajectory has no y columns".into()));
    }
    Ok(layout)
}

fn parse_cells(rec: &csv::StringRecord, cols: &[usize], row: usize) -> Result<Option<Vector>, IoError> {
    if cols.is_empty() {
        return Ok(Some(Vector::zeros(0)));
    }
    let cells: Vec<&str> = cols.iter().map(|&c| rec.get(c).unwrap_or("").trim()).collect();
    if cells.iter().all(|c| c.is_empty()) {
        return Ok(None);
    }
    let mut v = Vector::zeros(cols.len());
    for (i, cell) in cells.iter().enumerate() {
        let value: f64 = cell
            .parse()
            .map_err(|_| IoError::Format(format!("row {row}: cannot parse {cell:?}")))?;
        if !value.is_finite() {
            return Err(IoError::Format(format!("row {row}: non-finite value")));
        }
        v[i] = value;
    }
    Ok(Some(v))
}

pub fn trajectory_from_csv(text: &str) -> Result<Trajectory, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let layout = parse_layout(r.headers()?)?;
    let records = r.records().collect::<Result<Vec<_>, _>>()?;
    let samples = records.len();
    if samples < 2 {
        return Err(IoError::Format(format!("trajectory has {samples} rows, need at least 2")));
    }
    let has_d = !layout.d.is_empty();
    let has_x = !layout.x.is_empty();
    let mut u = Vec::with_capacity(samples - 1);
    let mut d = Vec::with_capacity(samples - 1);
    let mut x = Vec::with_capacity(samples);
    let mut y = Vec::with_capacity(samples);
    for (t, rec) in records.iter().enumerate() {
        let row = t + 2;
        let last = t + 1 == samples;
        let ut = parse_cells(rec, &layout.u, row)?;
        let dt = if has_d { parse_cells(rec, &layout.d, row)? } else { None };
        if !last {
            u.push(ut.ok_or_else(|| IoError::Format(format!("row {row}: missing input")))?);
            if has_d {
                d.push(dt.ok_or_else(|| IoError::Format(format!("row {row}: missing disturbance")))?);
            }
        }
        if has_x {
            x.push(parse_cells(rec, &layout.x, row)?.ok_or_else(|| IoError::Format(format!("row {row}: missing state")))?);
        }
        y.push(parse_cells(rec, &layout.y, row)?.ok_or_else(|| IoError::Format(format!("row {row}: missing output")))?);
    }
    let traj = Trajectory {
        u,
        d: has_d.then_some(d),
        x: has_x.then_some(x),
        y,
    };
    traj.validate()?;
    Ok(traj)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    trajectory_from_csv(&read_file(path)?)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    write_file(path, &trajectory_to_csv(traj)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverDims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Length of the measured output vector the observer expects.
    pub measured_outputs: usize,
}

/// On-disk observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverFile {
    pub dims: ObserverDims,
    #[serde(rename = "A_UIO")]
    pub a_uio: Rows,
    #[serde(rename = "B_u")]
    pub b_u: Rows,
    #[serde(rename = "B_y")]
    pub b_y: Rows,
    #[serde(rename = "D_UIO")]
    pub d_uio: Rows,
    #[serde(rename = "C1")]
    pub c1: Rows,
    #[serde(rename = "C2")]
    pub c2: Rows,
    pub permutation: Vec<usize>,
    pub output_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub diagnostics: serde_json::Value,
}

impl ObserverFile {
    pub fn from_ruio(ruio: &Ruio, diagnostics: serde_json::Value) -> Self {
        Self {
            dims: ObserverDims {
                n: ruio.n(),
                m: ruio.m(),
                p: ruio.p(),
                measured_outputs: ruio.measured_outputs,
            },
            a_uio: matrix_to_rows(&ruio.a_uio),
            b_u: matrix_to_rows(&ruio.b_u),
            b_y: matrix_to_rows(&ruio.b_y),
            d_uio: matrix_to_rows(&ruio.d_uio),
            c1: matrix_to_rows(&ruio.c1),
            c2: matrix_to_rows(&ruio.c2),
            permutation: ruio.permutation.as_slice().to_vec(),
            output_rows: ruio.output_rows.clone(),
            diagnostics,
        }
    }

    pub fn to_ruio(&self) -> Result<Ruio, IoError> {
        let ObserverDims { n, m, p, measured_outputs } = self.dims;
        if p > n {
            return Err(IoError::Format(format!("p = {p} exceeds n = {n}")));
        }
        let r = n - p;
        Ok(Ruio::new(
            rows_to_matrix("A_UIO", &self.a_uio, r, r)?,
            rows_to_matrix("B_u", &self.b_u, r, m)?,
            rows_to_matrix("B_y", &self.b_y, r, p)?,
            rows_to_matrix("D_UIO", &self.d_uio, r, p)?,
            rows_to_matrix("C1", &self.c1, p, r)?,
            rows_to_matrix("C2", &self.c2, p, p)?,
            StatePermutation::new(self.permutation.clone())?,
            self.output_rows.clone(),
            measured_outputs,
        )?)
    }
}

/// Diagnostics block attached to a data-driven observer.
pub fn design_diagnostics(dd: &DataDrivenDesign) -> serde_json::Value {
    let d = &dd.diagnostics;
    serde_json::json!({
        "spectral_radius": d.spectral_radius,
        "residuals": {
            "design_equation": d.design_residual,
            "identification": d.identification_residual,
            "state_split": d.split_residual,
        },
        "conditions": {
            "assumption": d.assumption,
            "kernel_inclusion": d.kernel_inclusion,
            "dependent_output_rows": d.dependent_output_rows,
            "w_norm": d.w_norm,
        },
    })
}

pub fn observer_to_json(ruio: &Ruio, diagnostics: serde_json::Value) -> String {
    let mut s =
        serde_json::to_string_pretty(&ObserverFile::from_ruio(ruio, diagnostics)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn observer_from_json(text: &str) -> Result<Ruio, IoError> {
    serde_json::from_str::<ObserverFile>(text)?.to_ruio()
}

pub fn read_observer(path: &Path) -> Result<Ruio, IoError> {
    observer_from_json(&read_file(path)?)
}

pub fn write_observer(path: &Path, ruio: &Ruio, diagnostics: serde_json::Value) -> Result<(), IoError> {
    write_file(path, &observer_to_json(ruio, diagnostics))
}

/// JSON report of an output-matrix identification.
pub fn identification_report(id: &Identification, rank_rtol: f64) -> serde_json::Value {
    let sv = &id.state_singular_values;
    let largest = sv.first().copied().unwrap_or(0.0);
    serde_json::json!({
        "C_hat": matrix_to_rows(&id.c_hat),
        "C_full": matrix_to_rows(&id.c_full),
        "kept_rows": id.kept_rows,
        "dependent_rows": id.dependent_rows,
        "residual": id.residual,
        "rank_margins": {
            "state_singular_values": sv,
            "smallest_state_singular_value": sv.last(),
            "rank_threshold": rank_rtol * largest,
        },
    })
}

fn sci(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn error_trace_to_csv(trace: &ErrorTrace) -> Result<String, IoError> {
    let n = trace.e.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    push_header(&mut header, "e", n);
    header.extend(["norm_e", "norm_e1", "norm_e2"].map(String::from));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for t in 0..trace.e.len() {
        let mut rec = vec![t.to_string()];
        rec.extend(trace.e[t].iter().map(|&v| sci(v)));
        rec.push(sci(trace.norm_e[t]));
        rec.push(sci(trace.norm_e1[t]));
        rec.push(sci(trace.norm_e2[t]));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

pub fn estimates_to_csv(estimates: &[Vector]) -> Result<String, IoError> {
    let n = estimates.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    push_header(&mut header, "xhat", n);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (t, x) in estimates.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(x.iter().map(|&v| sci(v)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

/// Initial observer state from a one-row CSV with columns `z_0..z_{r-1}`
/// (a header row is required).
pub fn z0_from_csv(text: &str) -> Result<Vector, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let rec = r
        .records()
        .next()
        .ok_or_else(|| IoError::Format("z0 file has no data row".into()))??;
    let values = rec
        .iter()
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| IoError::Format(format!("cannot parse {c:?} in z0 file")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Vector::from_vec(values))
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), IoError> {
    write_file(path, contents)
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    read_file(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_from_trajectory, DesignConfig};
    use crate::example::example_system;
    use crate::lti::{generate_experiment, ExperimentConfig};

    #[test]
    fn system_round_trip() {
        let sys = example_system();
        let back = system_from_json(&system_to_json(&sys)).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn system_without_dims_is_inferred() {
        let text = r#"{"A": [[0.5]], "B": [[1.0]], "E": [[]], "C": [[1.0]]}"#;
        let sys = system_from_json(text).unwrap();
        assert_eq!((sys.n(), sys.m(), sys.q(), sys.p()), (1, 1, 0, 1));
    }

    #[test]
    fn system_with_wrong_dims_rejected() {
        let text = r#"{"n": 2, "A": [[0.5]], "B": [[1.0]], "E": [[1.0]], "C": [[1.0]]}"#;
        assert!(matches!(system_from_json(text), Err(IoError::Format(_))));
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let exp = generate_experiment(&example_system(), &ExperimentConfig::new(11, 42)).unwrap();
        let csv = trajectory_to_csv(&exp.trajectory).unwrap();
        assert!(csv.starts_with("u_0,u_1,d_0,d_1,x_0,x_1,x_2,x_3,x_4,y_0,y_1,y_2\n"));
        let back = trajectory_from_csv(&csv).unwrap();
        assert_eq!(back, exp.trajectory);
    }

    #[test]
    fn trajectory_without_d_and_x() {
        let text = "u_0,y_0\n1,2\n3,4\n,5\n";
        let t = trajectory_from_csv(text).unwrap();
        assert!(t.d.is_none() && t.x.is_none());
        assert_eq!(t.steps(), 2);
        assert_eq!(t.y[2][0], 5.0);
    }

    #[test]
    fn trajectory_bad_header_rejected() {
        assert!(trajectory_from_csv("u_0,w_0,y_0\n1,2,3\n4,5,6\n").is_err());
        assert!(trajectory_from_csv("u_1,y_0\n1,2\n3,4\n").is_err());
    }

    #[test]
    fn observer_round_trip() {
        let exp = generate_experiment(&example_system(), &ExperimentConfig::new(11, 9)).unwrap();
        let dd = design_from_trajectory(&exp.trajectory, &DesignConfig::default()).unwrap();
        let text = observer_to_json(&dd.ruio, design_diagnostics(&dd));
        assert!(text.contains("\"A_UIO\""));
        assert!(text.contains("\"spectral_radius\""));
        assert_eq!(observer_from_json(&text).unwrap(), dd.ruio);
    }

    #[test]
    fn error_csv_has_twelve_digits() {
        let trace = ErrorTrace {
            e: vec![Vector::from_vec(vec![1.0 / 3.0, 0.0])],
            e1: vec![Vector::from_vec(vec![1.0 / 3.0])],
            e2: vec![Vector::zeros(1)],
            norm_e: vec![1.0 / 3.0],
            norm_e1: vec![1.0 / 3.0],
            norm_e2: vec![0.0],
            recursion_residual: vec![],
            e2_identity_residual: 0.0,
        };
        let csv = error_trace_to_csv(&trace).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,e_0,e_1,norm_e,norm_e1,norm_e2");
        assert!(lines.next().unwrap().starts_with("0,3.33333333333e-1,"));
    }
}
