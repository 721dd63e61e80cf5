//! End-to-end runs: initial data, integration, time sections, error reports and restarts.

use thiserror::Error;

use crate::benchmarks::AnalyticSolution;
use crate::meshing::{Mesh, MeshError};
use crate::metrics::{relative_error, ErrorReport, MetricsError, Norm};
use crate::problem::{regularize_initial_profile, ProblemError, ProblemSpec, Variant, DEFAULT_FLOOR};
use crate::semidiscrete::{
    extinction_check, ClassicalSystem, DirichletRamp, ExtinctionStatus, Guards, RhsContext, SemidiscreteError,
};
use crate::stiff_ode::{integrate, IntegrateError, IntegratorStats, Termination, Tolerances};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Semidiscrete(#[from] SemidiscreteError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot restart: {0}")]
    MeshIncompatible(String),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub t_start: f64,
    pub t_end: f64,
    /// Number of equidistant output sections in `(t_start, t_end]`.
    pub sections: usize,
    pub tolerances: Tolerances,
    /// Lower bound applied to the initial profile, in `u` units.
    pub floor: f64,
    pub slope_guard: f64,
    /// Extinction when every `w` node is below this.
    pub extinction_floor: f64,
    /// Extinction when `s` drops below this fraction of `s(t_start)`.
    pub s_min_fraction: f64,
    /// Start-up window for Dirichlet compatibility, as a fraction of the span.
    pub ramp_fraction: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            t_start: 0.0,
            t_end: 1.0,
            sections: crate::metrics::DEFAULT_SECTIONS,
            tolerances: Tolerances::default(),
            floor: DEFAULT_FLOOR,
            slope_guard: crate::interface_law::DEFAULT_SLOPE_GUARD,
            extinction_floor: 1e-10,
            s_min_fraction: 1e-3,
            ramp_fraction: 0.01,
        }
    }
}

impl SolveOptions {
    pub fn span(t_start: f64, t_end: f64, sections: usize) -> Self {
        SolveOptions { t_start, t_end, sections, ..Default::default() }
    }

    pub fn section_times(&self) -> Vec<f64> {
        let dt = (self.t_end - self.t_start) / self.sections as f64;
        let mut times: Vec<f64> = (1..self.sections).map(|j| self.t_start + j as f64 * dt).collect();
        times.push(self.t_end);
        times
    }

    fn check(&self) -> Result<(), SolveError> {
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err(SolveError::InvalidOptions(format!("empty time span ({}, {})", self.t_start, self.t_end)));
        }
        if self.sections == 0 {
            return Err(SolveError::InvalidOptions("need at least one section".into()));
        }
        Ok(())
    }
}

/// One stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub t: f64,
    pub s: f64,
    /// `x_i = s y_i`; the last entry equals `s`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Node values of the transformed variable (or of `u` for the fixed-grid baseline).
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceTermination {
    Completed,
    /// The solution vanished between the two times.
    Extinct {
        t_before: f64,
        t_after: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTrace {
    pub variant: &'static str,
    /// `u = w^exponent`.
    pub exponent: f64,
    /// Fixed-domain grid.
    pub y: Vec<f64>,
    pub initial: Section,
    pub sections: Vec<Section>,
    pub stats: IntegratorStats,
    pub termination: TraceTermination,
}

impl SolutionTrace {
    pub fn section_at(&self, t: f64) -> Option<&Section> {
        let tol = 1e-12 * t.abs().max(1.0);
        std::iter::once(&self.initial).chain(&self.sections).find(|s| (s.t - t).abs() <= tol)
    }
}

/// Initial state in transformed variables, for runs that do not start from the problem's profile.
#[derive(Debug, Clone, PartialEq)]
pub struct StartState {
    pub t: f64,
    pub w: Vec<f64>,
    pub s: f64,
}

fn section(t: f64, s: f64, y: &[f64], w: Vec<f64>, exponent: f64) -> Section {
    let x = y.iter().map(|v| v * s).collect();
    let u = w.iter().map(|v| v.max(0.0).powf(exponent)).collect();
    Section { t, s, x, u, w }
}

/// Solves `problem` on `mesh` from its own initial profile.
pub fn solve(problem: &ProblemSpec, mesh: &Mesh, opts: &SolveOptions) -> Result<SolutionTrace, SolveError> {
    opts.check()?;
    if let Variant::Classical(params) = problem.variant {
        crate::problem::validate(problem)?;
        let sys = ClassicalSystem::new(params, mesh);
        let u0: Vec<f64> = sys.x.iter().map(|x| (problem.initial.u0)(*x).max(0.0)).collect();
        let start = StartState { t: opts.t_start, w: u0, s: params.length };
        return solve_classical(&sys, mesh, start, opts);
    }
    let ctx = RhsContext::new(problem.clone(), mesh.clone(), guards(opts, 0.0))?;
    let (w, s0) = regularize_initial_profile(&problem.initial, opts.floor, mesh, &ctx.transform)?;
    solve_from(problem, mesh, StartState { t: opts.t_start, w, s: s0 }, opts)
}

fn guards(opts: &SolveOptions, s0: f64) -> Guards {
    Guards { slope_guard: opts.slope_guard, extinction_floor: opts.extinction_floor, s_min: opts.s_min_fraction * s0 }
}

/// Solves from an explicit transformed state (used by restarts).
pub fn solve_from(
    problem: &ProblemSpec,
    mesh: &Mesh,
    start: StartState,
    opts: &SolveOptions,
) -> Result<SolutionTrace, SolveError> {
    opts.check()?;
    if let Variant::Classical(params) = problem.variant {
        let sys = ClassicalSystem::new(params, mesh);
        return solve_classical(&sys, mesh, start, opts);
    }
    if start.w.len() != mesh.y.len() {
        return Err(SolveError::MeshIncompatible(format!(
            "state has {} nodes, mesh has {}",
            start.w.len(),
            mesh.y.len()
        )));
    }
    let mut ctx = RhsContext::new(problem.clone(), mesh.clone(), guards(opts, start.s))?;
    if let Some(target) = ctx.boundary_value(start.t) {
        if target != start.w[0] {
            let duration = opts.ramp_fraction * (opts.t_end - opts.t_start);
            ctx.ramp = Some(DirichletRamp { initial: start.w[0], duration: start.t + duration });
        }
    }
    let exponent = ctx.transform.exponent;
    let y0 = ctx.pack(&start.w, start.s);
    let times = opts.section_times();
    let g = ctx.guards;
    let k = ctx.first_unknown();
    let n = mesh.intervals();
    let mut last_accepted = (start.t, y0.clone());
    let mut stop = |t: f64, y: &[f64]| {
        last_accepted = (t, y.to_vec());
        extinction_check(&y[..n - k], y[n - k], &g) == ExtinctionStatus::Extinct
    };
    let result = integrate(&ctx, &y0, (opts.t_start, opts.t_end), &times, &opts.tolerances, &mut stop);
    let (outputs, stats, termination) = match result {
        Ok(run) => {
            let term = match run.termination {
                Termination::Completed => TraceTermination::Completed,
                Termination::Stopped { t_before, t_after } => TraceTermination::Extinct { t_before, t_after },
            };
            (run.outputs, run.stats, term)
        }
        Err(err) => {
            let (t_last, y_last) = &last_accepted;
            if !collapsing(&ctx, y_last, &start, &g) {
                return Err(err.into());
            }
            // The front collapsed faster than the step control could follow.
            let t_fail = failure_time(&err).max(*t_last);
            return finish_collapsed(&ctx, start, opts, exponent, *t_last, t_fail);
        }
    };
    let sections = outputs.into_iter().map(|(t, y)| {
        let st = ctx.unpack(t, &y);
        section(t, st.s, &mesh.y, st.c, exponent)
    });
    Ok(SolutionTrace {
        variant: problem.variant.name(),
        exponent,
        y: mesh.y.clone(),
        initial: section(start.t, start.s, &mesh.y, start.w.clone(), exponent),
        sections: sections.collect(),
        stats,
        termination,
    })
}

/// True when the last accepted state has nearly vanished (support or height down by 100x).
fn collapsing(ctx: &RhsContext, y: &[f64], start: &StartState, g: &Guards) -> bool {
    let n = y.len() - 1;
    let s = y[n];
    let max_w = y[..n].iter().copied().fold(0.0, f64::max);
    let max_w0 = start.w.iter().copied().fold(0.0, f64::max);
    let _ = ctx;
    s < 1e-2 * start.s.max(g.s_min) || max_w < 1e-2 * max_w0
}

fn failure_time(err: &IntegrateError) -> f64 {
    match err {
        IntegrateError::StepSizeUnderflow { t, h, .. } => t + h,
        IntegrateError::NewtonDivergence { t } | IntegrateError::RhsFailure { t, .. } => *t,
        IntegrateError::InvalidInput(_) => f64::NAN,
    }
}

/// Re-runs up to the last good time to recover the sections, then records extinction.
fn finish_collapsed(
    ctx: &RhsContext,
    start: StartState,
    opts: &SolveOptions,
    exponent: f64,
    t_last: f64,
    t_fail: f64,
) -> Result<SolutionTrace, SolveError> {
    let mesh = &ctx.mesh;
    let y0 = ctx.pack(&start.w, start.s);
    let times: Vec<f64> = opts.section_times().into_iter().filter(|t| *t <= t_last).collect();
    let mut never = |_: f64, _: &[f64]| false;
    let run = integrate(ctx, &y0, (opts.t_start, t_last), &times, &opts.tolerances, &mut never)?;
    let sections = run.outputs.into_iter().map(|(t, y)| {
        let st = ctx.unpack(t, &y);
        section(t, st.s, &mesh.y, st.c, exponent)
    });
    Ok(SolutionTrace {
        variant: ctx.problem.variant.name(),
        exponent,
        y: mesh.y.clone(),
        initial: section(start.t, start.s, &mesh.y, start.w.clone(), exponent),
        sections: sections.collect(),
        stats: run.stats,
        termination: TraceTermination::Extinct { t_before: t_last, t_after: t_fail },
    })
}

fn solve_classical(
    sys: &ClassicalSystem,
    mesh: &Mesh,
    start: StartState,
    opts: &SolveOptions,
) -> Result<SolutionTrace, SolveError> {
    let n = mesh.intervals();
    if start.w.len() != n + 1 {
        return Err(SolveError::MeshIncompatible(format!("state has {} nodes, mesh has {}", start.w.len(), n + 1)));
    }
    let length = sys.params.length;
    let mut never = |_: f64, _: &[f64]| false;
    let run =
        integrate(sys, &start.w[..n], (opts.t_start, opts.t_end), &opts.section_times(), &opts.tolerances, &mut never)?;
    let to_section = |t: f64, u: &[f64]| {
        let mut w = u.to_vec();
        w.push(0.0);
        section(t, length, &mesh.y, w, 1.0)
    };
    Ok(SolutionTrace {
        variant: "classical",
        exponent: 1.0,
        y: mesh.y.clone(),
        initial: to_section(start.t, &start.w[..n]),
        sections: run.outputs.iter().map(|(t, u)| to_section(*t, u)).collect(),
        stats: run.stats,
        termination: TraceTermination::Completed,
    })
}

/// `L1`/`L2` relative errors of every stored section against `analytic`.
///
/// Sections after the analytic extinction are skipped.
pub fn error_report(trace: &SolutionTrace, analytic: &dyn AnalyticSolution) -> Result<ErrorReport, SolveError> {
    let (mut times, mut l1, mut l2) = (Vec::new(), Vec::new(), Vec::new());
    for sec in &trace.sections {
        if analytic.interface(sec.t) <= 0.0 {
            continue;
        }
        times.push(sec.t);
        l1.push(relative_error(&sec.x, &sec.u, sec.s, analytic, sec.t, &trace.y, Norm::L1)?);
        l2.push(relative_error(&sec.x, &sec.u, sec.s, analytic, sec.t, &trace.y, Norm::L2)?);
    }
    Ok(ErrorReport::from_series(times, l1, l2)?)
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "pchip needs matching data with at least two points");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(delta[0]);
            return Pchip { x: x.to_vec(), y: y.to_vec(), d };
        }
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Pchip { x: x.to_vec(), y: y.to_vec(), d }
    }

    pub fn eval(&self, at: f64) -> f64 {
        let n = self.x.len();
        let k = self.x.partition_point(|v| *v <= at).clamp(1, n - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let t = (at - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Interpolates the stored section at `at` onto `new_mesh`.
pub fn regrid_restart(trace: &SolutionTrace, at: f64, new_mesh: &Mesh) -> Result<StartState, SolveError> {
    if let TraceTermination::Extinct { t_before, .. } = trace.termination {
        return Err(SolveError::MeshIncompatible(format!("trace went extinct near t = {t_before}")));
    }
    let sec =
        trace.section_at(at).ok_or_else(|| SolveError::MeshIncompatible(format!("no stored section at t = {at}")))?;
    if new_mesh.y == trace.y {
        return Ok(StartState { t: sec.t, w: sec.w.clone(), s: sec.s });
    }
    let interp = Pchip::new(&trace.y, &sec.w);
    let n = new_mesh.intervals();
    let mut w: Vec<f64> = new_mesh.y[..n].iter().map(|y| interp.eval(*y).max(0.0)).collect();
    w.push(0.0);
    Ok(StartState { t: sec.t, w, s: sec.s })
}
