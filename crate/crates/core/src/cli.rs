//! Command implementations behind the `seed-swarm` binary.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 scenario/validation
//! error (including unreadable or unparseable input and bad arguments),
//! 3 integration failure, 4 oracle failure (infeasible or enumeration bound),
//! 5 certificate failure from `check`.
//!
//! `run` writes `trajectory.csv` and `summary.json` into the output
//! directory; when none is given it uses `runs/<scenario-hash>/`, so reruns
//! overwrite only their own artifacts. CSV cells carry full double precision
//! (17 significant digits), RFC-4180 style with `.` as the decimal separator.

use crate::diagnostics::{self, CertificateReport, CertificateSeries};
use crate::integrator::{self, Trajectory};
use crate::oracle::{self, KktResiduals, KktSolution};
use crate::problem::{Scenario, ScenarioError};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;
pub const EXIT_SOLVE: i32 = 4;
pub const EXIT_CERTIFICATE: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] crate::integrator::SimError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Diagnostics(#[from] crate::diagnostics::DiagnosticsError),
    #[error("invalid override `{0}`: expected key=value")]
    MalformedOverride(String),
    #[error("override path `{path}` does not match the scenario structure: {reason}")]
    OverridePath { path: String, reason: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("cannot write {path}: {source}")]
    WriteOutput {
        path: String,
        source: std::io::Error,
    },
    #[error("one or more certificates failed")]
    CertificateFailure,
    #[error("the sigma CSV column packs at most 64 constraints, scenario has {0}")]
    TooManyForBitmask(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_)
            | CliError::MalformedOverride(_)
            | CliError::OverridePath { .. }
            | CliError::InvalidArgument(_)
            | CliError::TooManyForBitmask(_) => EXIT_VALIDATION,
            CliError::Sim(_) => EXIT_INTEGRATION,
            CliError::Oracle(_) => EXIT_SOLVE,
            CliError::Diagnostics(d) => match d {
                crate::diagnostics::DiagnosticsError::Sim(_) => EXIT_INTEGRATION,
                _ => EXIT_VALIDATION,
            },
            CliError::WriteOutput { .. } => EXIT_IO,
            CliError::CertificateFailure => EXIT_CERTIFICATE,
        }
    }
}

/// `key=value` pairs applied to the scenario JSON before parsing; keys are
/// dotted paths (`beta`, `agents.0.x0.1`, `method`).
pub fn parse_override(raw: &str) -> Result<(String, String), CliError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(CliError::MalformedOverride(raw.to_string())),
    }
}

fn apply_override(root: &mut Value, path: &str, raw_value: &str) -> Result<(), CliError> {
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (pos, segment) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        let reason = |r: &str| CliError::OverridePath {
            path: path.to_string(),
            reason: r.into(),
        };
        match node {
            Value::Object(map) => {
                if last {
                    map.insert((*segment).to_string(), parse_json_scalar(raw_value));
                    return Ok(());
                }
                node = map
                    .get_mut(*segment)
                    .ok_or_else(|| reason(&format!("no key `{segment}`")))?;
            }
            Value::Array(items) => {
                let index: usize = segment
                    .parse()
                    .map_err(|_| reason(&format!("`{segment}` is not an array index")))?;
                if index >= items.len() {
                    return Err(reason(&format!(
                        "index {index} out of bounds for length {}",
                        items.len()
                    )));
                }
                if last {
                    items[index] = parse_json_scalar(raw_value);
                    return Ok(());
                }
                node = &mut items[index];
            }
            _ => return Err(reason("path descends into a scalar")),
        }
    }
    Ok(())
}

/// Values parse as JSON when they can (numbers, booleans, arrays), and fall
/// back to plain strings (`method=rk4`).
fn parse_json_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Loads a scenario and applies dotted-path overrides at the JSON level.
pub fn load_scenario(path: &Path, overrides: &[(String, String)]) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.display().to_string(),
        source,
    })?;
    if overrides.is_empty() {
        return Ok(Scenario::from_json(&text)?);
    }
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let scenario =
        serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Ok(scenario)
}

fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column layout: t, `x[i][d]` per agent and dimension, `lambda[i][k]` per
/// constraint, then consensus_error, W, V, sigma (bitmask over the canonical
/// constraint order). `full_series` appends per-coordinate consensus errors
/// and the gradient-spread series.
pub fn trajectory_csv(
    s: &Scenario,
    traj: &Trajectory,
    series: &CertificateSeries,
    full_series: bool,
) -> Result<String, CliError> {
    let pairs = s.constraint_pairs();
    if pairs.len() > 64 {
        return Err(CliError::TooManyForBitmask(pairs.len()));
    }
    let mut header = String::from("t");
    for i in 0..s.agents.len() {
        for d in 0..s.dim {
            write!(header, ",x[{}][{}]", i + 1, d + 1).unwrap();
        }
    }
    for &(i, k) in &pairs {
        write!(header, ",lambda[{}][{}]", i + 1, k + 1).unwrap();
    }
    header.push_str(",consensus_error,W,V,sigma");
    if full_series {
        for d in 0..s.dim {
            write!(header, ",consensus_error_{}", d + 1).unwrap();
        }
        header.push_str(",omega");
    }
    header.push('\n');

    let mut out = header;
    for (idx, state) in traj.states.iter().enumerate() {
        let mut row = format_full(traj.times[idx]);
        for x in &state.positions {
            for d in 0..s.dim {
                row.push(',');
                row.push_str(&format_full(x[d]));
            }
        }
        for &(i, k) in &pairs {
            row.push(',');
            row.push_str(&format_full(state.multipliers[i][k]));
        }
        row.push(',');
        row.push_str(&format_full(series.consensus[idx].stacked));
        row.push(',');
        row.push_str(&format_full(series.w[idx]));
        row.push(',');
        row.push_str(&format_full(series.v[idx]));
        let mask = series.sigma[idx].bitmask(&pairs).expect("checked above");
        write!(row, ",{mask}").unwrap();
        if full_series {
            for d in 0..s.dim {
                row.push(',');
                row.push_str(&format_full(series.consensus[idx].per_coordinate[d]));
            }
            row.push(',');
            row.push_str(&format_full(series.omega[idx]));
        }
        row.push('\n');
        out.push_str(&row);
    }
    Ok(out)
}

/// Reproducible run record; wall time is the only field allowed to differ
/// between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario_hash: String,
    pub steps: usize,
    pub wall_time_s: f64,
    pub terminal_time: f64,
    pub terminal_positions: Vec<Vec<f64>>,
    pub terminal_multipliers: Vec<Vec<f64>>,
    pub kkt_residuals: KktResiduals,
    pub certificates: Vec<(String, bool)>,
}

fn build_summary(
    s: &Scenario,
    traj: &Trajectory,
    report: &CertificateReport,
    wall_time_s: f64,
) -> Result<RunSummary, CliError> {
    let terminal = traj.terminal();
    let residuals =
        oracle::kkt_residuals(s, terminal).map_err(crate::diagnostics::DiagnosticsError::from)?;
    Ok(RunSummary {
        scenario_hash: s.content_hash(),
        steps: traj.len().saturating_sub(1),
        wall_time_s,
        terminal_time: terminal.t,
        terminal_positions: terminal
            .positions
            .iter()
            .map(|x| x.iter().copied().collect())
            .collect(),
        terminal_multipliers: terminal.multipliers.clone(),
        kkt_residuals: residuals,
        certificates: report
            .passed_map()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CliError::WriteOutput {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::WriteOutput {
        path: path.display().to_string(),
        source,
    })
}

fn default_out_dir(s: &Scenario) -> PathBuf {
    PathBuf::from("runs").join(&s.content_hash()[..12])
}

/// Artifacts of one completed run.
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub solution: KktSolution,
    pub trajectory: Trajectory,
    pub report: CertificateReport,
    pub summary: RunSummary,
    pub out_dir: PathBuf,
}

fn execute_run(
    scenario_path: &Path,
    out_dir: Option<&Path>,
    overrides: &[(String, String)],
    full_series: bool,
) -> Result<RunArtifacts, CliError> {
    let started = Instant::now();
    let scenario = load_scenario(scenario_path, overrides)?;
    let validation = scenario.validate()?;
    for w in &validation.warnings {
        log::warn!("{w}");
    }
    let solution = oracle::solve_kkt(&scenario)?;
    let trajectory = integrator::simulate(&scenario)?;
    let series = diagnostics::certificate_series(&scenario, &trajectory, &solution)?;
    let report = diagnostics::certify(&scenario, &trajectory, &solution)?;
    let summary = build_summary(
        &scenario,
        &trajectory,
        &report,
        started.elapsed().as_secs_f64(),
    )?;

    let out_dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_out_dir(&scenario));
    let csv = trajectory_csv(&scenario, &trajectory, &series, full_series)?;
    write_file(&out_dir.join("trajectory.csv"), &csv)?;
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&out_dir.join("summary.json"), &summary_json)?;

    Ok(RunArtifacts {
        scenario,
        solution,
        trajectory,
        report,
        summary,
        out_dir,
    })
}

/// `run`: simulate, certify, export trajectory.csv + summary.json.
pub fn cmd_run(
    scenario_path: &Path,
    out_dir: Option<&Path>,
    overrides: &[(String, String)],
    full_series: bool,
) -> i32 {
    match execute_run(scenario_path, out_dir, overrides, full_series) {
        Ok(artifacts) => {
            println!(
                "wrote {} ({} steps, terminal t = {})",
                artifacts.out_dir.display(),
                artifacts.summary.steps,
                artifacts.summary.terminal_time
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `solve`: print the oracle solution as JSON.
pub fn cmd_solve(scenario_path: &Path, overrides: &[(String, String)]) -> i32 {
    let result = (|| -> Result<String, CliError> {
        let scenario = load_scenario(scenario_path, overrides)?;
        scenario.validate()?;
        let sol = oracle::solve_kkt(&scenario)?;
        let doc = json!({
            "x_star": sol.x_star.iter().copied().collect::<Vec<f64>>(),
            "lambda_star": sol.lambda_star,
            // 1-based pairs, matching the scenario file convention.
            "active_constraints": sol
                .active_constraints
                .iter()
                .map(|&(i, k)| vec![i + 1, k + 1])
                .collect::<Vec<_>>(),
            "objective_value": sol.objective_value,
        });
        Ok(serde_json::to_string_pretty(&doc).expect("json serializes"))
    })();
    match result {
        Ok(doc) => {
            println!("{doc}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `check`: run + certify; exit 0 only when every certificate passes.
pub fn cmd_check(scenario_path: &Path, overrides: &[(String, String)]) -> i32 {
    let result = (|| -> Result<CertificateReport, CliError> {
        let scenario = load_scenario(scenario_path, overrides)?;
        let validation = scenario.validate()?;
        for w in &validation.warnings {
            log::warn!("{w}");
        }
        let sol = oracle::solve_kkt(&scenario)?;
        let traj = integrator::simulate(&scenario)?;
        Ok(diagnostics::certify(&scenario, &traj, &sol)?)
    })();
    match result {
        Ok(report) => {
            print!("{report}");
            let doc = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{doc}");
            if report.all_passed() {
                EXIT_OK
            } else {
                eprintln!("error: {}", CliError::CertificateFailure);
                EXIT_CERTIFICATE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// One row of sweep.csv.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub terminal_consensus_error: Option<f64>,
    pub terminal_stationarity: Option<f64>,
    pub max_control_norm: Option<f64>,
}

/// Runs every variant of `param in values` concurrently and collects the
/// trade-off data: terminal consensus error, terminal stationarity, and the
/// largest control magnitude seen along each run. Per-variant failures
/// become rows with an error status.
pub fn sweep_rows(s: &Scenario, param: &str, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if !["alpha", "beta", "dt"].contains(&param) {
        return Err(CliError::InvalidArgument(format!(
            "sweep parameter must be alpha, beta, or dt; got `{param}`"
        )));
    }
    if values.is_empty() {
        return Err(CliError::InvalidArgument(
            "sweep needs at least one value".into(),
        ));
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&value| {
            let mut variant = s.clone();
            match param {
                "alpha" => variant.alpha = value,
                "beta" => variant.beta = value,
                "dt" => variant.dt = value,
                _ => unreachable!(),
            }
            let outcome = (|| -> Result<(f64, f64, f64), CliError> {
                variant.validate()?;
                let traj = integrator::simulate(&variant)?;
                let terminal = traj.terminal();
                let consensus = diagnostics::consensus_error(terminal).stacked;
                let residuals = oracle::kkt_residuals(&variant, terminal)
                    .map_err(crate::diagnostics::DiagnosticsError::from)?;
                let max_u = traj
                    .step_diagnostics
                    .iter()
                    .map(|d| d.max_control_norm)
                    .fold(0.0, f64::max);
                Ok((consensus, residuals.stationarity, max_u))
            })();
            match outcome {
                Ok((consensus, stationarity, max_u)) => SweepRow {
                    value,
                    status: "ok".into(),
                    terminal_consensus_error: Some(consensus),
                    terminal_stationarity: Some(stationarity),
                    max_control_norm: Some(max_u),
                },
                Err(e) => SweepRow {
                    value,
                    status: format!("error: {e}"),
                    terminal_consensus_error: None,
                    terminal_stationarity: None,
                    max_control_norm: None,
                },
            }
        })
        .collect();
    Ok(rows)
}

pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{param},status,terminal_consensus_error,terminal_kkt_stationarity,max_control_norm\n"
    );
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(format_full).unwrap_or_default();
        // Status strings may carry commas; keep the cell RFC-4180 quoted.
        let status = if r.status.contains(',') || r.status.contains('"') {
            format!("\"{}\"", r.status.replace('"', "\"\""))
        } else {
            r.status.clone()
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_full(r.value),
            status,
            fmt_opt(r.terminal_consensus_error),
            fmt_opt(r.terminal_stationarity),
            fmt_opt(r.max_control_norm),
        ));
    }
    out
}

/// `sweep`: vary one gain over a value list, write sweep.csv.
pub fn cmd_sweep(
    scenario_path: &Path,
    param: &str,
    values: &[f64],
    out_dir: Option<&Path>,
    overrides: &[(String, String)],
) -> i32 {
    let result = (|| -> Result<PathBuf, CliError> {
        let scenario = load_scenario(scenario_path, overrides)?;
        scenario.validate()?;
        let rows = sweep_rows(&scenario, param, values)?;
        let out_dir = out_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| default_out_dir(&scenario));
        let path = out_dir.join("sweep.csv");
        write_file(&path, &sweep_csv(param, &rows))?;
        Ok(path)
    })();
    match result {
        Ok(path) => {
            println!("wrote {}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `graph-info`: topology facts and the explicit-Euler stability bound.
pub fn cmd_graph_info(scenario_path: &Path, overrides: &[(String, String)]) -> i32 {
    let result = (|| -> Result<String, CliError> {
        let s = load_scenario(scenario_path, overrides)?;
        let t = &s.topology;
        let mut out = String::new();
        writeln!(out, "nodes: {}", t.node_count()).unwrap();
        writeln!(out, "edges: {}", t.edges().len()).unwrap();
        writeln!(out, "connected: {}", t.is_connected()).unwrap();
        let spectrum = t.laplacian_spectrum();
        match t.algebraic_connectivity() {
            Ok(v2) => writeln!(out, "algebraic_connectivity: {v2}").unwrap(),
            Err(_) => writeln!(out, "algebraic_connectivity: undefined").unwrap(),
        }
        writeln!(out, "laplacian_spectrum: {spectrum:?}").unwrap();
        let lambda_max = spectrum.last().copied().unwrap_or(0.0);
        if lambda_max > 0.0 {
            writeln!(out, "euler_stable_dt_max: {}", 2.0 / (s.beta * lambda_max)).unwrap();
        } else {
            writeln!(out, "euler_stable_dt_max: unbounded (no coupling)").unwrap();
        }
        Ok(out)
    })();
    match result {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Expose run internals for integration tests and the FFI layer.
pub fn run_pipeline(
    s: &Scenario,
) -> Result<(KktSolution, Trajectory, CertificateReport), CliError> {
    s.validate()?;
    let sol = oracle::solve_kkt(s)?;
    let traj = integrator::simulate(s)?;
    let report = diagnostics::certify(s, &traj, &sol)?;
    Ok((sol, traj, report))
}

/// Seam used by tests to keep artifacts without re-running: full `run`
/// pipeline with outputs written under `out_dir`.
pub fn run_to_dir(
    scenario_path: &Path,
    out_dir: &Path,
    overrides: &[(String, String)],
    full_series: bool,
) -> Result<RunArtifacts, CliError> {
    execute_run(scenario_path, Some(out_dir), overrides, full_series)
}
