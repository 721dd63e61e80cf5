//! Single runs, restarts and comparisons.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use frontmol_core::benchmarks::AnalyticSolution;
use frontmol_core::meshing::Mesh;
use frontmol_core::problem::Variant;
use frontmol_core::solve::{
    error_report, regrid_restart, solve, solve_from, SolutionTrace, SolveError, TraceTermination,
};

use crate::artifacts::{
    error_csv, interface_csv, read_solution, read_termination, solution_csv, stats_csv, write_atomic,
};
use crate::config::{ConfigError, ExperimentConfig};

pub const OUTPUT_ROOT_VAR: &str = "FRONTMOL_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "frontmol-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {source}")]
    Config { origin: String, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{context}: {source}")]
    Solve { context: String, source: SolveError },
}

impl CliError {
    /// 1 for anything the user can fix, 2 for solver failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solve { source, .. } => match source {
                SolveError::Problem(_)
                | SolveError::Mesh(_)
                | SolveError::MeshIncompatible(_)
                | SolveError::InvalidOptions(_) => 1,
                SolveError::Semidiscrete(_) | SolveError::Integrate(_) | SolveError::Metrics(_) => 2,
            },
            _ => 1,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    fn solve(context: impl Into<String>) -> impl FnOnce(SolveError) -> CliError {
        let context = context.into();
        move |source| CliError::Solve { context, source }
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = read_text(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    ExperimentConfig::parse(&text, stem)
        .map_err(|source| CliError::Config { origin: path.display().to_string(), source })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    write_atomic(&path, contents).map_err(CliError::io(format!("writing {}", path.display())))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub termination: TraceTermination,
    pub sections: usize,
    pub al: Option<f64>,
    pub max_l2: Option<f64>,
    /// Worst `|s_num - s_an| / s_an` over the compared sections.
    pub max_interface_error: Option<f64>,
    pub elapsed: Duration,
}

/// Run directory holding a trace: the directory itself or the parent of a file in it.
pub fn run_dir_of(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    }
}

/// Trace and termination record stored in a run directory.
pub fn load_trace(dir: &Path) -> Result<SolutionTrace, CliError> {
    let solution = read_text(&dir.join("solution.csv"))?;
    let mut trace = read_solution(&solution).map_err(CliError::Usage)?;
    let stats = read_text(&dir.join("stats.csv"))?;
    trace.termination = read_termination(&stats).map_err(CliError::Usage)?;
    Ok(trace)
}

fn integrate(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<SolutionTrace, CliError> {
    let context = format!("run `{}`", cfg.name);
    match &cfg.restart {
        None => solve(&cfg.problem, mesh, &cfg.options).map_err(CliError::solve(context)),
        Some(point) => {
            let donor = load_trace(&point.from)?;
            let start = regrid_restart(&donor, point.at, mesh)
                .map_err(CliError::solve(format!("restart from {}", point.from.display())))?;
            solve_from(&cfg.problem, mesh, start, &cfg.options).map_err(CliError::solve(context))
        }
    }
}

/// Writes `error.csv` for `trace`; `None` when no section can be compared.
fn compare_into(
    dir: &Path,
    trace: &SolutionTrace,
    analytic: &dyn AnalyticSolution,
) -> Result<Option<(f64, f64, f64)>, CliError> {
    let Some(report) = comparable_report(trace, analytic)? else {
        return Ok(None);
    };
    write(dir, "error.csv", &error_csv(trace, &report, analytic))?;
    let s_err = interface_error(trace, &report.times, analytic);
    Ok(Some((report.al, report.max_l2(), s_err)))
}

fn comparable_report(
    trace: &SolutionTrace,
    analytic: &dyn AnalyticSolution,
) -> Result<Option<frontmol_core::metrics::ErrorReport>, CliError> {
    match error_report(trace, analytic) {
        Ok(r) => Ok(Some(r)),
        Err(SolveError::Metrics(frontmol_core::metrics::MetricsError::EmptySeries)) => Ok(None),
        Err(e) => Err(CliError::solve(format!("comparing with {}", analytic.name()))(e)),
    }
}

fn interface_error(trace: &SolutionTrace, times: &[f64], analytic: &dyn AnalyticSolution) -> f64 {
    times
        .iter()
        .filter_map(|t| trace.section_at(*t))
        .map(|s| (s.s - analytic.interface(s.t)).abs() / analytic.interface(s.t))
        .fold(0.0, f64::max)
}

/// Solves `cfg` and writes its artifacts into `dir`.
pub fn run_into(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary, CliError> {
    let mesh = Mesh::build(&cfg.mesh).map_err(|e| CliError::Usage(format!("mesh: {e}")))?;
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let started = Instant::now();
    let trace = integrate(cfg, &mesh)?;
    let elapsed = started.elapsed();
    write(dir, "config.txt", &cfg.raw.to_text())?;
    write(dir, "solution.csv", &solution_csv(&trace))?;
    write(dir, "interface.csv", &interface_csv(&trace))?;
    write(dir, "stats.csv", &stats_csv(&trace, &cfg.mesh))?;
    if cfg.mesh_dump {
        write(dir, "mesh.txt", &mesh.dump_table())?;
    }
    let errors = match cfg.analytic() {
        Some(analytic) => compare_into(dir, &trace, analytic.as_ref())?,
        None => None,
    };
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        termination: trace.termination,
        sections: trace.sections.len(),
        al: errors.map(|e| e.0),
        max_l2: errors.map(|e| e.1),
        // the fixed-grid baseline has no moving interface to compare
        max_interface_error: errors.filter(|_| !matches!(cfg.problem.variant, Variant::Classical(_))).map(|e| e.2),
        elapsed,
    })
}

/// Error table for a stored solution, as written by a run with the same oracle.
pub fn compare(solution: &Path, analytic: &dyn AnalyticSolution) -> Result<(String, f64), CliError> {
    let path = if solution.is_dir() { solution.join("solution.csv") } else { solution.to_path_buf() };
    let trace = read_solution(&read_text(&path)?).map_err(CliError::Usage)?;
    let report = comparable_report(&trace, analytic)?.ok_or_else(|| {
        CliError::Usage(format!("no section of {} lies before the oracle's extinction", path.display()))
    })?;
    Ok((error_csv(&trace, &report, analytic), report.al))
}

/// Config for continuing the run in `donor` from its section at `at` on a new mesh.
pub fn restart_config(
    donor: &Path,
    at: f64,
    mesh_keys: &[(String, String)],
    name: Option<&str>,
) -> Result<ExperimentConfig, CliError> {
    let donor = fs::canonicalize(donor).map_err(CliError::io(format!("locating {}", donor.display())))?;
    let cfg = load_config(&donor.join("config.txt"))?;
    let trace = load_trace(&donor)?;
    if let TraceTermination::Extinct { t_before, .. } = trace.termination {
        let source = SolveError::MeshIncompatible(format!("trace went extinct near t = {t_before}"));
        return Err(CliError::Solve { context: format!("restart from {}", donor.display()), source });
    }
    if trace.section_at(at).is_none() {
        let stored: Vec<String> = trace.sections.iter().map(|s| format!("{}", s.t)).collect();
        return Err(CliError::Usage(format!("no stored section at t = {at}; stored times: {}", stored.join(", "))));
    }
    let remaining = trace.sections.iter().filter(|s| s.t > at + 1e-12 * at.abs().max(1.0)).count();
    if remaining == 0 {
        return Err(CliError::Usage(format!("t = {at} is the last stored section; nothing left to integrate")));
    }
    let mut raw = cfg.raw.clone();
    raw.remove_namespace("mesh");
    raw.remove_namespace("restart");
    for (k, v) in mesh_keys {
        raw.set(k, v.clone());
    }
    if cfg.mesh_dump {
        raw.set("output.mesh_dump", "true");
    }
    raw.set("time.start", format!("{at:?}"));
    raw.set("time.sections", remaining.to_string());
    raw.set("restart.from", donor.display().to_string());
    raw.set("restart.at", format!("{at:?}"));
    let name = name.map_or_else(|| format!("{}-restart", cfg.name), str::to_string);
    raw.set("output.name", name.clone());
    ExperimentConfig::from_raw(raw, &name)
        .map_err(|source| CliError::Config { origin: format!("restart of {}", donor.display()), source })
}
