//! Relative discrete error norms against analytic solutions and their time averages.

use thiserror::Error;

use crate::benchmarks::AnalyticSolution;

/// Default number of time sections averaged into `AL`.
pub const DEFAULT_SECTIONS: usize = 30;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("analytic solution vanishes on the sample at t = {0}")]
    DegenerateDenominator(f64),
    #[error("empty error series")]
    EmptySeries,
    #[error("section has {x} abscissae and {u} values")]
    MalformedSection { x: usize, u: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    fn power(self) -> i32 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

/// Piecewise-linear interpolant of `(x, u)`; zero outside `[x_0, x_last]`.
pub fn interpolate_linear(x: &[f64], u: &[f64], at: f64) -> f64 {
    let last = x.len() - 1;
    if at < x[0] || at > x[last] {
        return 0.0;
    }
    let k = x.partition_point(|v| *v <= at).clamp(1, last);
    let (x0, x1) = (x[k - 1], x[k]);
    let r = (at - x0) / (x1 - x0);
    u[k - 1] + r * (u[k] - u[k - 1])
}

/// Relative discrete `L1`/`L2` error of one numerical section.
///
/// Samples at `x_i = s* y_i` (`i = 1..N`) with `s* = max(s_num, s_analytic)`
/// and weights `(y_i - y_{i-1}) s*`.
pub fn relative_error(
    x: &[f64],
    u: &[f64],
    s_num: f64,
    analytic: &dyn AnalyticSolution,
    t: f64,
    y: &[f64],
    norm: Norm,
) -> Result<f64, MetricsError> {
    if x.len() != u.len() || x.is_empty() {
        return Err(MetricsError::MalformedSection { x: x.len(), u: u.len() });
    }
    let s_star = s_num.max(analytic.interface(t));
    let k = norm.power();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..y.len() {
        let xi = s_star * y[i];
        let weight = (y[i] - y[i - 1]) * s_star;
        let ua = analytic.eval(xi, t);
        let un = interpolate_linear(x, u, xi);
        num += (un - ua).abs().powi(k) * weight;
        den += ua.abs().powi(k) * weight;
    }
    if !(den > 0.0) {
        return Err(MetricsError::DegenerateDenominator(t));
    }
    Ok(match norm {
        Norm::L1 => num / den,
        Norm::L2 => (num / den).sqrt(),
    })
}

pub fn average_error(series: &[f64]) -> Result<f64, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub l1_rel: Vec<f64>,
    pub l2_rel: Vec<f64>,
    pub al: f64,
    pub r: usize,
}

impl ErrorReport {
    pub fn from_series(times: Vec<f64>, l1_rel: Vec<f64>, l2_rel: Vec<f64>) -> Result<Self, MetricsError> {
        let al = average_error(&l2_rel)?;
        let r = l2_rel.len();
        Ok(ErrorReport { times, l1_rel, l2_rel, al, r })
    }

    pub fn max_l2(&self) -> f64 {
        self.l2_rel.iter().copied().fold(0.0, f64::max)
    }
}
