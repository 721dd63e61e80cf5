//! Problem instances, parameter-regime checks and the transformation exponent.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::meshing::Mesh;

/// Default lower bound applied to the initial profile, in `u` units.
pub const DEFAULT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProblemError {
    #[error("degenerate diffusion required: n = {0} must exceed 1")]
    DegenerationRequired(f64),
    #[error("reaction exponent out of range: {0}")]
    ReactionExponentOutOfRange(String),
    #[error("convection exponent out of range: gamma = {0} must be at least 1")]
    ConvectionExponentOutOfRange(f64),
    #[error("no interface: min(n, gamma) = {lhs} must exceed min(m, 1) = {rhs} when b0 != 0 and c0 < 0")]
    InterfaceNonexistent { lhs: f64, rhs: f64 },
    #[error("singular isotherm: p = {0} must lie in (0, 1)")]
    SingularIsotherm(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported boundary condition: {0}")]
    UnsupportedBoundary(String),
    #[error("empty initial support (L0 = {0}) and no auxiliary support requested")]
    EmptySupport(f64),
}

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A coefficient `f(x, t)` together with its first and second `x`-derivatives.
#[derive(Clone)]
pub struct FieldFn {
    value: Field,
    dx: Field,
    dxx: Field,
    zero: bool,
}

impl FieldFn {
    pub fn constant(c: f64) -> Self {
        FieldFn::affine(c, 0.0, 0.0)
    }

    /// `c + cx * x + ct * t`.
    pub fn affine(c: f64, cx: f64, ct: f64) -> Self {
        FieldFn {
            value: Arc::new(move |x, t| c + cx * x + ct * t),
            dx: Arc::new(move |_, _| cx),
            dxx: Arc::new(|_, _| 0.0),
            zero: c == 0.0 && cx == 0.0 && ct == 0.0,
        }
    }

    pub fn new(
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dxx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FieldFn { value: Arc::new(value), dx: Arc::new(dx), dxx: Arc::new(dxx), zero: false }
    }

    #[inline]
    pub fn value(&self, x: f64, t: f64) -> f64 {
        (self.value)(x, t)
    }

    #[inline]
    pub fn dx(&self, x: f64, t: f64) -> f64 {
        (self.dx)(x, t)
    }

    #[inline]
    pub fn dxx(&self, x: f64, t: f64) -> f64 {
        (self.dxx)(x, t)
    }

    /// True only for coefficients built as the constant zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }
}

impl fmt::Debug for FieldFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldFn(f(0,0) = {})", self.value(0.0, 0.0))
    }
}

/// A function of time only.
#[derive(Clone)]
pub struct TimeFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl TimeFn {
    pub fn constant(c: f64) -> Self {
        TimeFn(Arc::new(move |_| c))
    }

    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TimeFn(Arc::new(f))
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFn(f(0) = {})", self.at(0.0))
    }
}

/// Extra absorption/source term `coefficient * u^exponent`.
///
/// Only terms that vanish at the front faster than the leading reaction
/// (`exponent + n > 2`) are accepted; they do not enter the interface law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionTerm {
    pub coefficient: f64,
    pub exponent: f64,
}

/// `u_t = (u^n)_xx + b0 (u^gamma)_x + c0 u^m (+ extra reaction terms)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawParams {
    pub n: f64,
    pub m: f64,
    pub gamma: f64,
    pub b0: f64,
    pub c0: f64,
    pub extra_reactions: Vec<ReactionTerm>,
}

impl PowerLawParams {
    pub fn new(n: f64, m: f64, gamma: f64, b0: f64, c0: f64) -> Self {
        PowerLawParams { n, m, gamma, b0, c0, extra_reactions: Vec::new() }
    }

    /// Porous medium equation `u_t = (u^n)_xx`.
    pub fn porous_medium(n: f64) -> Self {
        PowerLawParams::new(n, 0.0, 1.0, 0.0, 0.0)
    }
}

/// `u_t = (g(t) u^n)_xx + (b0(x,t) u^gamma)_x + c0(x,t) p0 u^m`.
#[derive(Debug, Clone)]
pub struct GeneralizedCoefficients {
    pub g: TimeFn,
    pub b0: FieldFn,
    pub c0: FieldFn,
    pub p0: f64,
}

/// `u_t = (a0 u)_xx + (b0 u)_x + c0 u^m` for `u > 0`, with `a0 >= delta`, `c0 <= -delta`.
#[derive(Debug, Clone)]
pub struct OxygenParams {
    pub a0: FieldFn,
    pub b0: FieldFn,
    pub c0: FieldFn,
    pub m: f64,
    pub delta: f64,
}

/// Equilibrium-adsorption transport `(u + rho Psi(u))_t = D u_xx - v u_x`,
/// with `Psi(u) = a u^p / (1 + b u^p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminantParams {
    pub d: f64,
    pub v: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

/// Fixed-grid porous medium baseline on `(0, length)` with symmetry at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    pub n: f64,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub enum Variant {
    PowerLaw(PowerLawParams),
    Generalized(PowerLawParams, GeneralizedCoefficients),
    Oxygen(OxygenParams),
    Contaminant(ContaminantParams),
    Classical(ClassicalParams),
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::PowerLaw(_) => "power_law",
            Variant::Generalized(..) => "generalized",
            Variant::Oxygen(_) => "oxygen",
            Variant::Contaminant(_) => "contaminant",
            Variant::Classical(_) => "classical",
        }
    }
}

/// Condition imposed at `x = 0`.
#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    Dirichlet(TimeFn),
    /// `-(u^n)_x + b0 u^gamma = q(t)`.
    Flux(TimeFn),
    Symmetry,
}

#[derive(Clone)]
pub struct InitialProfile {
    pub u0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub support: f64,
    /// Support radius used when `u0` vanishes identically.
    pub auxiliary_support: Option<f64>,
}

impl InitialProfile {
    pub fn new(support: f64, u0: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        InitialProfile { u0: Arc::new(u0), support, auxiliary_support: None }
    }

    /// Identically zero data, started from a small auxiliary support.
    pub fn zero(auxiliary_support: f64) -> Self {
        InitialProfile { u0: Arc::new(|_| 0.0), support: 0.0, auxiliary_support: Some(auxiliary_support) }
    }
}

impl fmt::Debug for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialProfile")
            .field("support", &self.support)
            .field("auxiliary_support", &self.auxiliary_support)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub variant: Variant,
    pub boundary: BoundaryCondition,
    pub initial: InitialProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `m + n = 2`: the reaction term enters the interface law.
    ReactionBalanced,
    /// `m + n > 2`.
    DiffusionDominated,
    NoReaction,
    /// Non-degenerate diffusion with strong absorption (oxygen type).
    Consumption,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformInfo {
    /// `u = w^exponent`.
    pub exponent: f64,
    pub branch: Branch,
}

const BALANCE_EPS: f64 = 1e-12;

fn branch_for(n: f64, m: f64, reaction_present: bool) -> Branch {
    if !reaction_present {
        Branch::NoReaction
    } else if (m + n - 2.0).abs() <= BALANCE_EPS {
        Branch::ReactionBalanced
    } else {
        Branch::DiffusionDominated
    }
}

fn check_power_law(p: &PowerLawParams, c0_sign: f64) -> Result<TransformInfo, ProblemError> {
    let finite = [p.n, p.m, p.gamma, p.b0, p.c0].iter().all(|v| v.is_finite());
    if !finite {
        return Err(ProblemError::InvalidParameter("power-law parameters must be finite".into()));
    }
    let reaction = c0_sign != 0.0;
    if p.b0 != 0.0 && c0_sign < 0.0 {
        let lhs = p.n.min(p.gamma);
        let rhs = p.m.min(1.0);
        if lhs <= rhs {
            return Err(ProblemError::InterfaceNonexistent { lhs, rhs });
        }
    }
    if p.n <= 1.0 {
        return Err(ProblemError::DegenerationRequired(p.n));
    }
    if p.gamma < 1.0 {
        return Err(ProblemError::ConvectionExponentOutOfRange(p.gamma));
    }
    if reaction {
        if !(0.0..1.0).contains(&p.m) {
            return Err(ProblemError::ReactionExponentOutOfRange(format!("m = {} must lie in [0, 1)", p.m)));
        }
        if p.m + p.n < 2.0 - BALANCE_EPS {
            return Err(ProblemError::ReactionExponentOutOfRange(format!(
                "m + n = {} < 2 has no supported interface law",
                p.m + p.n
            )));
        }
    }
    for term in &p.extra_reactions {
        if !(term.coefficient.is_finite() && term.exponent.is_finite()) || term.exponent + p.n <= 2.0 + BALANCE_EPS {
            return Err(ProblemError::ReactionExponentOutOfRange(format!(
                "extra reaction exponent {} needs exponent + n > 2 (n = {})",
                term.exponent, p.n
            )));
        }
    }
    let beta = 1.0 / (p.n - 1.0);
    Ok(TransformInfo { exponent: beta, branch: branch_for(p.n, p.m, reaction) })
}

/// Checks the parameter regime and returns the transformation exponent.
pub fn validate(spec: &ProblemSpec) -> Result<TransformInfo, ProblemError> {
    let x_probe = spec.initial.support.max(spec.initial.auxiliary_support.unwrap_or(0.0));
    let info = match &spec.variant {
        Variant::PowerLaw(p) => check_power_law(p, if p.c0 == 0.0 { 0.0 } else { p.c0.signum() })?,
        Variant::Generalized(p, coeffs) => {
            if coeffs.c0.is_zero() || coeffs.p0 == 0.0 {
                check_power_law(p, 0.0)?
            } else {
                let c = coeffs.c0.value(x_probe, 0.0) * coeffs.p0;
                if !c.is_finite() {
                    return Err(ProblemError::InvalidParameter("c0(x, t) p0 is not finite".into()));
                }
                check_power_law(p, if c < 0.0 { -1.0 } else { 1.0 })?
            }
        }
        Variant::Oxygen(o) => {
            if !(0.0..1.0).contains(&o.m) {
                return Err(ProblemError::ReactionExponentOutOfRange(format!("m = {} must lie in [0, 1)", o.m)));
            }
            if !(o.delta > 0.0) {
                return Err(ProblemError::InvalidParameter("delta must be positive".into()));
            }
            let a = o.a0.value(x_probe, 0.0);
            let c = o.c0.value(x_probe, 0.0);
            if !(a >= o.delta) || !(c <= -o.delta) {
                return Err(ProblemError::InvalidParameter(format!(
                    "oxygen coefficients need a0 >= delta and c0 <= -delta (a0 = {a}, c0 = {c})"
                )));
            }
            TransformInfo { exponent: 2.0 / (1.0 - o.m), branch: Branch::Consumption }
        }
        Variant::Contaminant(c) => {
            if c.p >= 1.0 {
                return Err(ProblemError::SingularIsotherm(c.p));
            }
            if !(c.p > 0.0) {
                return Err(ProblemError::InvalidParameter(format!("isotherm exponent p = {} must be positive", c.p)));
            }
            if !(c.d > 0.0 && c.rho > 0.0 && c.a > 0.0 && c.b >= 0.0 && c.v.is_finite()) {
                return Err(ProblemError::InvalidParameter("contaminant needs D > 0, rho > 0, a > 0, b >= 0".into()));
            }
            TransformInfo { exponent: 1.0 / (1.0 - c.p), branch: Branch::NoReaction }
        }
        Variant::Classical(c) => {
            if c.n <= 1.0 {
                return Err(ProblemError::DegenerationRequired(c.n));
            }
            if !(c.length > 0.0) {
                return Err(ProblemError::InvalidParameter("classical domain length must be positive".into()));
            }
            if !matches!(spec.boundary, BoundaryCondition::Symmetry) {
                return Err(ProblemError::UnsupportedBoundary("the classical baseline supports symmetry only".into()));
            }
            TransformInfo { exponent: 1.0, branch: Branch::NoReaction }
        }
    };
    match &spec.boundary {
        BoundaryCondition::Dirichlet(phi) => {
            let v = phi.at(0.0);
            if !(v >= 0.0) {
                return Err(ProblemError::InvalidParameter(format!("Dirichlet value must be nonnegative, got {v}")));
            }
        }
        BoundaryCondition::Flux(_) => {
            if !matches!(spec.variant, Variant::PowerLaw(_) | Variant::Generalized(..)) {
                return Err(ProblemError::UnsupportedBoundary(format!(
                    "flux condition is not available for the {} variant",
                    spec.variant.name()
                )));
            }
        }
        BoundaryCondition::Symmetry => {}
    }
    if !(spec.initial.support > 0.0) && spec.initial.auxiliary_support.is_none_or(|s| !(s > 0.0)) {
        return Err(ProblemError::EmptySupport(spec.initial.support));
    }
    Ok(info)
}

/// Node values `W_0..W_N` of the transformed variable and the starting support.
///
/// `W_i = max(u0(y_i s0), floor * chi(y_i))^(1/exponent)` with
/// `chi(y) = (1 - y)^exponent`, so the floored part is linear in `w` and
/// vanishes at the interface. `W_N` is exactly zero.
pub fn regularize_initial_profile(
    profile: &InitialProfile,
    floor: f64,
    mesh: &Mesh,
    info: &TransformInfo,
) -> Result<(Vec<f64>, f64), ProblemError> {
    if !(floor >= 0.0) {
        return Err(ProblemError::InvalidParameter(format!("floor must be nonnegative, got {floor}")));
    }
    let s0 = if profile.support > 0.0 {
        profile.support
    } else {
        match profile.auxiliary_support {
            Some(s) if s > 0.0 => s,
            _ => return Err(ProblemError::EmptySupport(profile.support)),
        }
    };
    let beta = info.exponent;
    let n = mesh.intervals();
    let mut w = Vec::with_capacity(n + 1);
    for &y in &mesh.y[..n] {
        let u = (profile.u0)(y * s0);
        if !u.is_finite() {
            return Err(ProblemError::InvalidParameter(format!("initial profile is not finite at x = {}", y * s0)));
        }
        let chi = (1.0 - y).powf(beta);
        w.push(u.max(floor * chi).max(0.0).powf(1.0 / beta));
    }
    w.push(0.0);
    Ok((w, s0))
}
