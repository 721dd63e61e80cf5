//! Variable-order, variable-step BDF integrator for stiff systems.
//!
//! The history is kept as backward differences of the interpolating
//! polynomial (orders 1 to 5). Steps are solved with a modified Newton
//! iteration on `I - c J`, where `J` is a forward-difference Jacobian that is
//! reused across steps until convergence degrades.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const MAX_ORDER: usize = 5;
const NEWTON_MAXITER: usize = 4;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const JAC_MAX_REUSE: usize = 20;
const JAC_RATE_LIMIT: f64 = 0.5;
const MAX_NEWTON_FAILURES: usize = 30;

/// Failure reported by a right-hand side.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct RhsError {
    pub message: String,
}

impl RhsError {
    pub fn new(message: impl Into<String>) -> Self {
        RhsError { message: message.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t:e} (h = {h:e}, last error norm {error_norm:e})")]
    StepSizeUnderflow { t: f64, h: f64, error_norm: f64 },
    #[error("Newton iteration diverged at t = {t:e} after Jacobian refresh and step reductions")]
    NewtonDivergence { t: f64 },
    #[error("right-hand side failed at t = {t:e}: {source}")]
    RhsFailure { t: f64, source: RhsError },
    #[error("invalid integrator input: {0}")]
    InvalidInput(String),
}

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError>;

    /// Number of components the system had to clamp for this accepted state.
    fn audit(&self, _y: &[f64]) -> u64 {
        0
    }
}

impl<F> OdeSystem for (usize, F)
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<(), RhsError>,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        (self.1)(t, y, dydt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbsTol {
    Scalar(f64),
    PerComponent(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: AbsTol,
    pub max_order: usize,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    /// Constant step with no error control; runs order 1 (implicit Euler).
    pub fixed_step: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-6,
            atol: AbsTol::Scalar(1e-9),
            max_order: MAX_ORDER,
            max_step: None,
            initial_step: None,
            fixed_step: None,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances { rtol, atol: AbsTol::Scalar(atol), ..Default::default() }
    }

    fn validate(&self, dim: usize) -> Result<(), IntegrateError> {
        if !(self.rtol >= 1e-12) {
            return Err(IntegrateError::InvalidInput(format!("rtol must be >= 1e-12, got {}", self.rtol)));
        }
        match &self.atol {
            AbsTol::Scalar(a) if !(*a > 0.0) => {
                return Err(IntegrateError::InvalidInput("atol must be positive".into()))
            }
            AbsTol::PerComponent(v) if v.len() != dim || v.iter().any(|a| !(*a > 0.0)) => {
                return Err(IntegrateError::InvalidInput(
                    "per-component atol must be positive and match the system size".into(),
                ))
            }
            _ => {}
        }
        if !(1..=MAX_ORDER).contains(&self.max_order) {
            return Err(IntegrateError::InvalidInput(format!("max_order must be in 1..=5, got {}", self.max_order)));
        }
        if let Some(h) = self.fixed_step {
            if !(h > 0.0) {
                return Err(IntegrateError::InvalidInput("fixed step must be positive".into()));
            }
        }
        Ok(())
    }

    fn atol_at(&self, i: usize) -> f64 {
        match &self.atol {
            AbsTol::Scalar(a) => *a,
            AbsTol::PerComponent(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegratorStats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub rhs_evals: u64,
    pub jacobian_evals: u64,
    pub newton_iters: u64,
    pub clamp_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// The stop predicate fired; the event lies in `(t_before, t_after]`.
    Stopped {
        t_before: f64,
        t_after: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    /// `(t, y)` for every requested output time that was reached.
    pub outputs: Vec<(f64, Vec<f64>)>,
    pub stats: IntegratorStats,
    pub termination: Termination,
    /// State at the last accepted step.
    pub final_time: f64,
    pub final_state: Vec<f64>,
}

/// Forward-difference Jacobian of `sys` at `(t, y)`, with `f0 = f(t, y)`.
///
/// Column `j` uses the increment `max(sqrt(eps) |y_j|, sqrt(eps) scale_j)`.
pub fn fd_jacobian<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    scale: &[f64],
) -> Result<DMatrix<f64>, RhsError> {
    let n = y.len();
    let sq = f64::EPSILON.sqrt();
    let mut jac = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for j in 0..n {
        let mut h = (sq * y[j].abs()).max(sq * scale[j]);
        if h == 0.0 {
            h = sq;
        }
        let yj = y[j];
        yp[j] = yj + h;
        h = yp[j] - yj;
        sys.rhs(t, &yp, &mut fp)?;
        yp[j] = yj;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }
    Ok(jac)
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v.iter().zip(scale).map(|(x, w)| (x / w).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

/// Matrix `R` used to rescale the difference array when the step changes.
fn compute_r(order: usize, factor: f64) -> DMatrix<f64> {
    let k = order + 1;
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        m[(0, j)] = 1.0;
    }
    for i in 1..k {
        for j in 1..k {
            m[(i, j)] = (i as f64 - 1.0 - factor * j as f64) / i as f64;
        }
    }
    // cumulative product down each column
    for i in 1..k {
        for j in 0..k {
            m[(i, j)] *= m[(i - 1, j)];
        }
    }
    m
}

fn change_d(d: &mut [Vec<f64>], order: usize, factor: f64) {
    let r = compute_r(order, factor);
    let u = compute_r(order, 1.0);
    let ru = &r * &u;
    let n = d[0].len();
    let k = order + 1;
    let mut out = vec![vec![0.0; n]; k];
    for (a, row) in out.iter_mut().enumerate() {
        for b in 0..k {
            let c = ru[(b, a)];
            if c != 0.0 {
                for (o, x) in row.iter_mut().zip(&d[b]) {
                    *o += c * x;
                }
            }
        }
    }
    for (a, row) in out.into_iter().enumerate() {
        d[a] = row;
    }
}

struct Coefficients {
    gamma: [f64; MAX_ORDER + 1],
    alpha: [f64; MAX_ORDER + 1],
    error_const: [f64; MAX_ORDER + 2],
}

impl Coefficients {
    fn bdf() -> Self {
        let mut gamma = [0.0; MAX_ORDER + 1];
        for k in 1..=MAX_ORDER {
            gamma[k] = gamma[k - 1] + 1.0 / k as f64;
        }
        let alpha = gamma;
        let mut error_const = [0.0; MAX_ORDER + 2];
        for (k, e) in error_const.iter_mut().enumerate() {
            *e = 1.0 / (k + 1) as f64;
        }
        Coefficients { gamma, alpha, error_const }
    }
}

struct NewtonOutcome {
    converged: bool,
    iterations: usize,
    rate: f64,
    y: Vec<f64>,
    d: Vec<f64>,
    failure: Option<RhsError>,
}

struct Bdf<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    tol: &'a Tolerances,
    n: usize,
    t: f64,
    t_end: f64,
    h_abs: f64,
    order: usize,
    d: Vec<Vec<f64>>,
    n_equal_steps: usize,
    jac: DMatrix<f64>,
    jac_fresh: bool,
    jac_age: usize,
    jac_stale: bool,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    lu_c: f64,
    newton_tol: f64,
    coef: Coefficients,
    stats: IntegratorStats,
    fixed: bool,
    snapshot: DenseSnapshot,
}

/// Difference array of the accepted step, taken before any rescaling.
struct DenseSnapshot {
    t: f64,
    h: f64,
    order: usize,
    d: Vec<Vec<f64>>,
}

impl<'a, S: OdeSystem + ?Sized> Bdf<'a, S> {
    fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), RhsError> {
        self.stats.rhs_evals += 1;
        self.sys.rhs(t, y, out)?;
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(RhsError::new(format!("non-finite derivative in component {i}")));
        }
        Ok(())
    }

    fn scale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().enumerate().map(|(i, v)| self.tol.atol_at(i) + self.tol.rtol * v.abs()).collect()
    }

    fn refresh_jacobian(&mut self, t: f64, y: &[f64]) -> Result<(), RhsError> {
        let mut f0 = vec![0.0; self.n];
        self.eval(t, y, &mut f0)?;
        let scale = self.scale(y);
        let before = self.stats.rhs_evals;
        let jac = fd_jacobian(self.sys, t, y, &f0, &scale);
        self.stats.rhs_evals = before + self.n as u64;
        self.jac = jac?;
        self.stats.jacobian_evals += 1;
        self.jac_fresh = true;
        self.jac_age = 0;
        self.jac_stale = false;
        self.lu = None;
        Ok(())
    }

    fn factor(&mut self, c: f64) {
        let mut m = -c * &self.jac;
        for i in 0..self.n {
            m[(i, i)] += 1.0;
        }
        self.lu = Some(m.lu());
        self.lu_c = c;
    }

    fn select_initial_step(&mut self, y0: &[f64], f0: &[f64]) -> Result<f64, RhsError> {
        let interval = (self.t_end - self.t).abs();
        if interval == 0.0 {
            return Ok(0.0);
        }
        let scale = self.scale(y0);
        let d0 = rms(y0, &scale);
        let d1 = rms(f0, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; self.n];
        self.eval(self.t + h0, &y1, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = rms(&diff, &scale) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(1.0 / 2.0) };
        let mut h = (100.0 * h0).min(h1).min(interval);
        if let Some(ms) = self.tol.max_step {
            h = h.min(ms);
        }
        Ok(h)
    }

    fn newton(&mut self, t_new: f64, y_predict: &[f64], c: f64, psi: &[f64], scale: &[f64]) -> NewtonOutcome {
        let n = self.n;
        let mut y = y_predict.to_vec();
        let mut d = vec![0.0; n];
        let mut f = vec![0.0; n];
        let mut dy_norm_old: Option<f64> = None;
        let mut rate = 0.0;
        let mut converged = false;
        let mut iterations = 0;
        let mut failure = None;
        for k in 0..NEWTON_MAXITER {
            iterations = k + 1;
            self.stats.newton_iters += 1;
            if let Err(e) = self.eval(t_new, &y, &mut f) {
                failure = Some(e);
                break;
            }
            let rhs = DVector::from_iterator(n, (0..n).map(|i| c * f[i] - psi[i] - d[i]));
            let dy = match self.lu.as_ref().and_then(|lu| lu.solve(&rhs)) {
                Some(v) => v,
                None => break,
            };
            let dy_norm = rms(dy.as_slice(), scale);
            let this_rate = dy_norm_old.map(|old| dy_norm / old);
            if let Some(r) = this_rate {
                rate = r;
                if r >= 1.0 || r.powi((NEWTON_MAXITER - k) as i32) / (1.0 - r) * dy_norm > self.newton_tol {
                    break;
                }
            }
            for i in 0..n {
                y[i] += dy[i];
                d[i] += dy[i];
            }
            if dy_norm == 0.0 || this_rate.is_some_and(|r| r / (1.0 - r) * dy_norm < self.newton_tol) {
                converged = true;
                break;
            }
            dy_norm_old = Some(dy_norm);
        }
        NewtonOutcome { converged, iterations, rate, y, d, failure }
    }

    /// Advances by one accepted step.
    fn step(&mut self) -> Result<(), IntegrateError> {
        let t = self.t;
        let min_step = 10.0 * ((t.abs() * f64::EPSILON).max(f64::MIN_POSITIVE));
        let mut h_abs = self.h_abs;
        if let Some(ms) = self.tol.max_step {
            if h_abs > ms {
                change_d(&mut self.d, self.order, ms / h_abs);
                h_abs = ms;
                self.n_equal_steps = 0;
            }
        }
        if h_abs < min_step && !self.fixed {
            change_d(&mut self.d, self.order, min_step / h_abs);
            h_abs = min_step;
            self.n_equal_steps = 0;
        }
        let order = self.order;
        let mut last_error = 0.0;
        let mut newton_failures = 0;
        let mut last_rhs_failure: Option<RhsError> = None;

        let (t_new, y_new, d_new, n_iter, rate, error_norm, scale) = loop {
            if h_abs < min_step {
                if let Some(e) = last_rhs_failure {
                    return Err(IntegrateError::RhsFailure { t, source: e });
                }
                return Err(IntegrateError::StepSizeUnderflow { t, h: h_abs, error_norm: last_error });
            }
            let mut t_new = t + h_abs;
            if t_new - self.t_end > 0.0 || (self.t_end - t_new) < min_step {
                t_new = self.t_end;
                change_d(&mut self.d, order, (t_new - t) / h_abs);
                self.n_equal_steps = 0;
                self.lu = None;
            }
            let h = t_new - t;
            h_abs = h;

            let mut y_predict = vec![0.0; self.n];
            for row in &self.d[..=order] {
                for (p, v) in y_predict.iter_mut().zip(row) {
                    *p += v;
                }
            }
            let scale = self.scale(&y_predict);
            let mut psi = vec![0.0; self.n];
            for j in 1..=order {
                let g = self.coef.gamma[j] / self.coef.alpha[order];
                for (p, v) in psi.iter_mut().zip(&self.d[j]) {
                    *p += g * v;
                }
            }
            let c = h / self.coef.alpha[order];

            if self.jac_stale {
                if let Err(e) = self.refresh_jacobian(t_new, &y_predict) {
                    last_rhs_failure = Some(e);
                    h_abs *= 0.5;
                    change_d(&mut self.d, order, 0.5);
                    self.n_equal_steps = 0;
                    self.stats.steps_rejected += 1;
                    continue;
                }
            }

            let outcome = loop {
                if self.lu.is_none() || self.lu_c != c {
                    self.factor(c);
                }
                let out = self.newton(t_new, &y_predict, c, &psi, &scale);
                if out.converged || self.jac_fresh {
                    break out;
                }
                match self.refresh_jacobian(t_new, &y_predict) {
                    Ok(()) => continue,
                    Err(e) => {
                        break NewtonOutcome { failure: Some(e), converged: false, ..out };
                    }
                }
            };

            if !outcome.converged {
                newton_failures += 1;
                if let Some(e) = outcome.failure.clone() {
                    last_rhs_failure = Some(e);
                }
                if newton_failures > MAX_NEWTON_FAILURES {
                    if let Some(e) = last_rhs_failure {
                        return Err(IntegrateError::RhsFailure { t, source: e });
                    }
                    return Err(IntegrateError::NewtonDivergence { t });
                }
                h_abs *= 0.5;
                change_d(&mut self.d, order, 0.5);
                self.n_equal_steps = 0;
                self.lu = None;
                self.stats.steps_rejected += 1;
                continue;
            }
            last_rhs_failure = None;

            let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + outcome.iterations) as f64;
            let scale_new = self.scale(&outcome.y);
            let err: Vec<f64> = outcome.d.iter().map(|v| self.coef.error_const[order] * v).collect();
            let error_norm = rms(&err, &scale_new);
            last_error = error_norm;

            if error_norm > 1.0 && !self.fixed {
                let factor = MIN_FACTOR.max(safety * error_norm.powf(-1.0 / (order as f64 + 1.0)));
                h_abs *= factor;
                change_d(&mut self.d, order, factor);
                self.n_equal_steps = 0;
                self.stats.steps_rejected += 1;
                continue;
            }
            break (t_new, outcome.y, outcome.d, outcome.iterations, outcome.rate, error_norm, scale_new);
        };

        self.stats.steps_accepted += 1;
        self.stats.clamp_events += self.sys.audit(&y_new);
        self.n_equal_steps += 1;
        self.t = t_new;
        self.h_abs = h_abs;
        self.jac_fresh = false;
        self.jac_age += 1;
        if rate > JAC_RATE_LIMIT || self.jac_age >= JAC_MAX_REUSE {
            self.jac_stale = true;
        }

        // D^{j+1} y_n = D^j y_n - D^j y_{n-1}; d holds D^{k+1} y_n
        let n = self.n;
        for (i, &dn) in d_new.iter().enumerate().take(n) {
            self.d[order + 2][i] = dn - self.d[order + 1][i];
            self.d[order + 1][i] = dn;
        }
        for j in (0..=order).rev() {
            for i in 0..n {
                let v = self.d[j + 1][i];
                self.d[j][i] += v;
            }
        }
        self.d[0].copy_from_slice(&y_new);
        self.snapshot = DenseSnapshot { t: t_new, h: h_abs, order, d: self.d[..=order].to_vec() };

        if self.fixed || self.n_equal_steps < order + 1 {
            return Ok(());
        }

        let error_m_norm = if order > 1 {
            let e: Vec<f64> = self.d[order].iter().map(|v| self.coef.error_const[order - 1] * v).collect();
            rms(&e, &scale)
        } else {
            f64::INFINITY
        };
        let error_p_norm = if order < self.tol.max_order {
            let e: Vec<f64> = self.d[order + 2].iter().map(|v| self.coef.error_const[order + 1] * v).collect();
            rms(&e, &scale)
        } else {
            f64::INFINITY
        };
        let norms = [error_m_norm, error_norm, error_p_norm];
        let mut best = 0;
        let mut best_factor = f64::NEG_INFINITY;
        for (k, e) in norms.iter().enumerate() {
            let f = if *e == 0.0 { f64::INFINITY } else { e.powf(-1.0 / (order + k) as f64) };
            if f > best_factor {
                best_factor = f;
                best = k;
            }
        }
        let new_order = order + best - 1;
        let safety = 0.9 * (2 * NEWTON_MAXITER + 1) as f64 / (2 * NEWTON_MAXITER + n_iter) as f64;
        let factor = MAX_FACTOR.min(safety * best_factor);
        self.order = new_order;
        self.h_abs *= factor;
        change_d(&mut self.d, new_order, factor);
        self.n_equal_steps = 0;
        self.lu = None;
        Ok(())
    }

    /// Interpolating polynomial of the last accepted step evaluated at `t`.
    fn dense_at(&self, t: f64) -> Vec<f64> {
        let snap = &self.snapshot;
        let mut y = snap.d[0].clone();
        let mut p = 1.0;
        for j in 0..snap.order {
            let shift = snap.t - snap.h * j as f64;
            p *= (t - shift) / (snap.h * (j + 1) as f64);
            for (yi, dv) in y.iter_mut().zip(&snap.d[j + 1]) {
                *yi += p * dv;
            }
        }
        y
    }
}

/// Integrates `sys` from `t_span.0` to `t_span.1`.
///
/// `output_times` must be sorted and inside the span; each one reached is
/// returned with the dense-output state. `stop` is called after every
/// accepted step and ends the integration when it returns `true`.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t_span: (f64, f64),
    output_times: &[f64],
    tol: &Tolerances,
    stop: &mut dyn FnMut(f64, &[f64]) -> bool,
) -> Result<Integration, IntegrateError> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(IntegrateError::InvalidInput(format!("y0 has {} entries, system has {n}", y0.len())));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::InvalidInput("initial state is not finite".into()));
    }
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(IntegrateError::InvalidInput("time span must be increasing".into()));
    }
    if output_times.windows(2).any(|w| w[1] < w[0]) || output_times.iter().any(|&t| t < t0 || t > t1) {
        return Err(IntegrateError::InvalidInput("output times must be sorted and inside the span".into()));
    }
    tol.validate(n)?;

    let mut bdf = Bdf {
        sys,
        tol,
        n,
        t: t0,
        t_end: t1,
        h_abs: 0.0,
        order: 1,
        d: vec![vec![0.0; n]; MAX_ORDER + 3],
        n_equal_steps: 0,
        jac: DMatrix::zeros(n, n),
        jac_fresh: false,
        jac_age: 0,
        jac_stale: true,
        lu: None,
        lu_c: f64::NAN,
        newton_tol: (10.0 * f64::EPSILON / tol.rtol).max(0.03f64.min(tol.rtol.sqrt())),
        coef: Coefficients::bdf(),
        stats: IntegratorStats::default(),
        fixed: tol.fixed_step.is_some(),
        snapshot: DenseSnapshot { t: t0, h: 0.0, order: 0, d: vec![y0.to_vec()] },
    };
    if bdf.fixed {
        bdf.newton_tol = 10.0 * f64::EPSILON / tol.rtol;
    }

    let mut f0 = vec![0.0; n];
    bdf.eval(t0, y0, &mut f0).map_err(|e| IntegrateError::RhsFailure { t: t0, source: e })?;
    bdf.h_abs = match (tol.fixed_step, tol.initial_step) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => {
            bdf.select_initial_step(y0, &f0).map_err(|e| IntegrateError::RhsFailure { t: t0, source: e })?
        }
    };
    if bdf.fixed {
        bdf.h_abs = bdf.h_abs.min(t1 - t0);
    }
    bdf.d[0] = y0.to_vec();
    bdf.d[1] = f0.iter().map(|f| f * bdf.h_abs).collect();

    let mut outputs = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] <= t0 {
        outputs.push((output_times[next_out], y0.to_vec()));
        next_out += 1;
    }

    let mut termination = Termination::Completed;
    while bdf.t < t1 {
        let t_old = bdf.t;
        bdf.step()?;
        let t_new = bdf.t;
        while next_out < output_times.len() && output_times[next_out] <= t_new {
            let t_out = output_times[next_out];
            let y = if t_out == t_new { bdf.snapshot.d[0].clone() } else { bdf.dense_at(t_out) };
            outputs.push((t_out, y));
            next_out += 1;
        }
        if stop(t_new, &bdf.snapshot.d[0]) {
            termination = Termination::Stopped { t_before: t_old, t_after: t_new };
            break;
        }
    }

    Ok(Integration {
        outputs,
        stats: bdf.stats,
        termination,
        final_time: bdf.t,
        final_state: bdf.snapshot.d[0].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn never(_: f64, _: &[f64]) -> bool {
        false
    }

    type Rhs = (usize, fn(f64, &[f64], &mut [f64]) -> Result<(), RhsError>);

    fn decay() -> Rhs {
        (1, |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            Ok(())
        })
    }

    fn stiff_linear() -> Rhs {
        (1, |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -1000.0 * (y[0] - t.sin()) + t.cos();
            Ok(())
        })
    }

    #[test]
    fn exponential_decay() {
        let tol = Tolerances::new(1e-8, 1e-12);
        let out = integrate(&decay(), &[1.0], (0.0, 1.0), &[1.0], &tol, &mut never).unwrap();
        let y1 = out.outputs[0].1[0];
        let exact = (-1.0f64).exp();
        assert!((y1 - exact).abs() / exact < 10.0 * 1e-8, "{y1} vs {exact}");
        assert_eq!(out.termination, Termination::Completed);
    }

    #[test]
    fn constant_solution_is_exact() {
        let sys = (2, |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy.fill(0.0);
            Ok(())
        });
        let times = [0.5, 1.0, 3.0];
        let out = integrate(&sys, &[2.5, -1.0], (0.0, 3.0), &times, &Tolerances::default(), &mut never).unwrap();
        assert_eq!(out.outputs.len(), 3);
        for (_, y) in &out.outputs {
            assert_eq!(y, &vec![2.5, -1.0]);
        }
    }

    #[test]
    fn stiff_linear_problem_takes_few_steps() {
        let tol = Tolerances::new(1e-6, 1e-10);
        let out = integrate(&stiff_linear(), &[0.0], (0.0, 1.0), &[1.0], &tol, &mut never).unwrap();
        let y1 = out.outputs[0].1[0];
        assert!((y1 - 1f64.sin()).abs() < 1e-4);
        assert!(out.stats.steps_accepted < 1000, "{:?}", out.stats);
    }

    #[test]
    fn implicit_euler_fixed_step() {
        let lambda = -3.0;
        let sys = (1, move |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = lambda * y[0];
            Ok(())
        });
        let h = 0.1;
        let tol = Tolerances { max_order: 1, fixed_step: Some(h), ..Tolerances::new(1e-10, 1e-14) };
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * h).collect();
        let out = integrate(&sys, &[1.0], (0.0, 1.0), &times, &tol, &mut never).unwrap();
        let mut expected = 1.0;
        for (_, y) in &out.outputs {
            expected /= 1.0 - h * lambda;
            assert!((y[0] - expected).abs() <= 1e-12 * expected, "{} vs {expected}", y[0]);
        }
    }

    #[test]
    fn stop_predicate_brackets_event() {
        let mut fired = None;
        let mut stop = |t: f64, y: &[f64]| {
            if y[0] < 0.5 {
                fired = Some(t);
                true
            } else {
                false
            }
        };
        let out = integrate(&decay(), &[1.0], (0.0, 5.0), &[], &Tolerances::default(), &mut stop).unwrap();
        let event = 2f64.ln();
        match out.termination {
            Termination::Stopped { t_before, t_after } => {
                assert!(t_before < event && event <= t_after, "({t_before}, {t_after})");
                assert_eq!(Some(t_after), fired);
            }
            other => panic!("expected a stop, got {other:?}"),
        }
    }

    #[test]
    fn dense_output_matches_direct_stop() {
        let tol = Tolerances::new(1e-7, 1e-10);
        let t_mid = 0.737;
        let dense = integrate(&stiff_linear(), &[0.0], (0.0, 1.0), &[t_mid], &tol, &mut never).unwrap();
        let direct = integrate(&stiff_linear(), &[0.0], (0.0, t_mid), &[t_mid], &tol, &mut never).unwrap();
        let a = dense.outputs[0].1[0];
        let b = direct.outputs[0].1[0];
        assert!((a - b).abs() < 10.0 * (1e-10 + 1e-7 * b.abs()), "{a} vs {b}");
    }

    #[test]
    fn fd_jacobian_cases() {
        let a = [[1.0, -2.0], [0.5, 3.0]];
        let lin = (2, move |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = a[0][0] * y[0] + a[0][1] * y[1];
            dy[1] = a[1][0] * y[0] + a[1][1] * y[1];
            Ok(())
        });
        let y = [0.3, -1.2];
        let mut f0 = [0.0; 2];
        lin.rhs(0.0, &y, &mut f0).unwrap();
        let j = fd_jacobian(&lin, 0.0, &y, &f0, &[1.0, 1.0]).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - a[r][c]).abs() <= 1e-6 * a[r][c].abs());
            }
        }

        let quad = (2, |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1] * y[1];
            dy[1] = y[0];
            Ok(())
        });
        let y = [2.0, 3.0];
        let mut f0 = [0.0; 2];
        quad.rhs(0.0, &y, &mut f0).unwrap();
        let j = fd_jacobian(&quad, 0.0, &y, &f0, &[1.0, 1.0]).unwrap();
        let expected = [[0.0, 6.0], [1.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - expected[r][c]).abs() <= 1e-6 * expected[r][c].abs().max(1.0));
            }
        }

        let constant = (3, |_t: f64, _y: &[f64], dy: &mut [f64]| {
            dy.copy_from_slice(&[1.0, 2.0, 3.0]);
            Ok(())
        });
        let y = [1.0, 1.0, 1.0];
        let j = fd_jacobian(&constant, 0.0, &y, &[1.0, 2.0, 3.0], &[1.0; 3]).unwrap();
        assert!(j.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rhs_failure_at_start_is_reported() {
        let sys = (1, |_t: f64, _y: &[f64], _dy: &mut [f64]| Err(RhsError::new("boom")));
        let err = integrate(&sys, &[1.0], (0.0, 1.0), &[], &Tolerances::default(), &mut never).unwrap_err();
        assert!(matches!(err, IntegrateError::RhsFailure { .. }));
    }

    #[test]
    fn invalid_tolerances_rejected() {
        let tol = Tolerances { max_order: 6, ..Default::default() };
        assert!(integrate(&decay(), &[1.0], (0.0, 1.0), &[], &tol, &mut never).is_err());
        let tol = Tolerances::new(1e-14, 1e-9);
        assert!(integrate(&decay(), &[1.0], (0.0, 1.0), &[], &tol, &mut never).is_err());
    }

    #[test]
    fn deterministic_runs() {
        let tol = Tolerances::new(1e-6, 1e-9);
        let a = integrate(&stiff_linear(), &[0.0], (0.0, 2.0), &[0.5, 1.5], &tol, &mut never).unwrap();
        let b = integrate(&stiff_linear(), &[0.0], (0.0, 2.0), &[0.5, 1.5], &tol, &mut never).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn global_error_tracks_rtol() {
        for rtol in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8] {
            let tol = Tolerances::new(rtol, rtol * 1e-3);
            let out = integrate(&stiff_linear(), &[0.0], (0.0, 1.0), &[1.0], &tol, &mut never).unwrap();
            let err = (out.outputs[0].1[0] - 1f64.sin()).abs();
            assert!(err <= 10.0 * rtol, "rtol {rtol}: error {err}");
        }
    }
}
