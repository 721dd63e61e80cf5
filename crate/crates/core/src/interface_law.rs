//! Interface-speed laws `s'(t) = Q(...)` from one-sided derivatives of `w` at the front.
//!
//! All derivatives are in physical `x` units; callers holding `∂y w` divide by `s` first.

use thiserror::Error;

use crate::problem::{Branch, ContaminantParams, GeneralizedCoefficients, OxygenParams, PowerLawParams, TransformInfo};

/// Default lower bound on `|∂x w|` where the law divides by it.
pub const DEFAULT_SLOPE_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InterfaceError {
    #[error("front slope |dw/dx| = {slope:e} is below the guard {guard:e}")]
    SlopeTooFlat { slope: f64, guard: f64 },
    #[error("coefficient not finite at the interface: {0}")]
    CoefficientNonfinite(String),
    #[error("coefficient sign violation at the interface: {0}")]
    CoefficientSignViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySlopeSample {
    pub dw_dx: f64,
    /// Only used by the oxygen law.
    pub d2w_dx2: f64,
    pub s: f64,
    pub t: f64,
}

impl BoundarySlopeSample {
    pub fn new(dw_dx: f64, s: f64, t: f64) -> Self {
        BoundarySlopeSample { dw_dx, d2w_dx2: 0.0, s, t }
    }
}

/// `G(gamma)`: only linear convection moves the front.
pub fn convection_factor(gamma: f64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else {
        0.0
    }
}

fn guarded(slope: f64, guard: f64) -> Result<f64, InterfaceError> {
    if !(slope.abs() >= guard) {
        return Err(InterfaceError::SlopeTooFlat { slope: slope.abs(), guard });
    }
    Ok(slope)
}

fn law(
    n: f64,
    diffusivity: f64,
    reaction: Option<f64>,
    convection: f64,
    gamma: f64,
    dw_dx: f64,
    guard: f64,
) -> Result<f64, InterfaceError> {
    let mut q = -diffusivity * n / (n - 1.0) * dw_dx - convection_factor(gamma) * convection;
    if let Some(c) = reaction {
        q -= (n - 1.0) * c / guarded(dw_dx, guard)?;
    }
    Ok(q)
}

pub fn speed_power_law(
    sample: &BoundarySlopeSample,
    params: &PowerLawParams,
    info: &TransformInfo,
    slope_guard: f64,
) -> Result<f64, InterfaceError> {
    let reaction = (info.branch == Branch::ReactionBalanced).then_some(params.c0);
    law(params.n, 1.0, reaction, params.b0, params.gamma, sample.dw_dx, slope_guard)
}

/// Time-dependent diffusivity `g(t)` multiplies the diffusive term in every branch.
pub fn speed_generalized(
    sample: &BoundarySlopeSample,
    coeffs: &GeneralizedCoefficients,
    params: &PowerLawParams,
    info: &TransformInfo,
    slope_guard: f64,
) -> Result<f64, InterfaceError> {
    let (s, t) = (sample.s, sample.t);
    let g = coeffs.g.at(t);
    let b0 = coeffs.b0.value(s, t);
    let reaction = if info.branch == Branch::ReactionBalanced { Some(coeffs.c0.value(s, t) * coeffs.p0) } else { None };
    if !g.is_finite() || !b0.is_finite() || reaction.is_some_and(|c| !c.is_finite()) {
        return Err(InterfaceError::CoefficientNonfinite(format!(
            "g = {g}, b0 = {b0}, c0 p0 = {reaction:?} at t = {t}"
        )));
    }
    law(params.n, g, reaction, b0, params.gamma, sample.dw_dx, slope_guard)
}

/// Front speed for the non-degenerate problem with strong absorption, `u = w^alpha`.
pub fn speed_oxygen(sample: &BoundarySlopeSample, params: &OxygenParams) -> Result<f64, InterfaceError> {
    let (s, t) = (sample.s, sample.t);
    let alpha = 2.0 / (1.0 - params.m);
    let a0 = params.a0.value(s, t);
    let c0 = params.c0.value(s, t);
    let b0 = params.b0.value(s, t);
    let a0x = params.a0.dx(s, t);
    let c0x = params.c0.dx(s, t);
    if ![a0, c0, b0, a0x, c0x].iter().all(|v| v.is_finite()) {
        return Err(InterfaceError::CoefficientNonfinite(format!("oxygen coefficients at (s, t) = ({s}, {t})")));
    }
    if !(a0 >= params.delta) || !(c0 <= -params.delta) {
        return Err(InterfaceError::CoefficientSignViolation(format!(
            "a0 = {a0}, c0 = {c0}, delta = {}",
            params.delta
        )));
    }
    let radicand = -alpha * (alpha - 1.0) * a0 / c0;
    if !(radicand >= 0.0) {
        return Err(InterfaceError::CoefficientSignViolation(format!("square-root argument {radicand} < 0")));
    }
    Ok((2.0 * alpha - 1.0) * a0 * radicand.sqrt() * sample.d2w_dx2 - b0 - (alpha + 1.0) * a0x
        + (alpha - 1.0) * c0x * a0 / c0)
}

pub fn speed_contaminant(sample: &BoundarySlopeSample, params: &ContaminantParams) -> f64 {
    -params.d / (params.rho * params.a * (1.0 - params.p)) * sample.dw_dx
}
