//! Right-hand sides of the coupled node/interface ODE systems on the fixed domain `y in [0, 1]`.
//!
//! The state vector is `[C_k, ..., C_{N-1}, s]` with `k = 1` under a Dirichlet
//! condition and `k = 0` otherwise. `C_N = 0` is implicit.

use thiserror::Error;

use crate::interface_law::{
    speed_contaminant, speed_generalized, speed_oxygen, speed_power_law, BoundarySlopeSample, InterfaceError,
    DEFAULT_SLOPE_GUARD,
};
use crate::meshing::Mesh;
use crate::problem::{
    validate, BoundaryCondition, ClassicalParams, ContaminantParams, GeneralizedCoefficients, OxygenParams,
    PowerLawParams, ProblemError, ProblemSpec, TransformInfo, Variant,
};
use crate::stiff_ode::{OdeSystem, RhsError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SemidiscreteError {
    #[error("non-finite right-hand side at node {index} (t = {t})")]
    NonfiniteRhs { index: usize, t: f64 },
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("flux boundary needs C_0 > 0 (got {0})")]
    BoundaryDegenerate(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("state has {got} entries, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("the classical baseline runs on a fixed grid; use ClassicalSystem")]
    ClassicalVariant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guards {
    pub slope_guard: f64,
    /// Extinction when every node value of `w` drops below this.
    pub extinction_floor: f64,
    /// Extinction when the interface retreats below this.
    pub s_min: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Guards { slope_guard: DEFAULT_SLOPE_GUARD, extinction_floor: 1e-12, s_min: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtinctionStatus {
    Continue,
    Extinct,
}

pub fn extinction_check(c: &[f64], s: f64, guards: &Guards) -> ExtinctionStatus {
    let max_c = c.iter().copied().fold(0.0f64, f64::max);
    if max_c < guards.extinction_floor || s < guards.s_min {
        ExtinctionStatus::Extinct
    } else {
        ExtinctionStatus::Continue
    }
}

/// Ghost value `C_{-1}` realizing `-(g u^n)_x + b0 u^gamma = q` at `y = 0`.
#[allow(clippy::too_many_arguments)]
pub fn ghost_value(
    c1: f64,
    c0: f64,
    s: f64,
    q: f64,
    params: &PowerLawParams,
    b0: f64,
    g: f64,
    beta: f64,
    alpha1: f64,
) -> Result<f64, SemidiscreteError> {
    let flux = -b0 * c0.max(0.0).powf(params.gamma * beta) + q;
    if flux == 0.0 {
        return Ok(c1);
    }
    if !(c0 > 0.0) {
        return Err(SemidiscreteError::BoundaryDegenerate(c0));
    }
    let nb = params.n * beta;
    Ok(c1 + s * flux * 2.0 * alpha1 / (g * nb * c0.powf(nb - 1.0)))
}

/// Dirichlet value in `w`, blended from the initial node value over a short start-up window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletRamp {
    pub initial: f64,
    pub duration: f64,
}

fn smoothstep(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0);
    r * r * (3.0 - 2.0 * r)
}

#[derive(Debug, Clone)]
pub struct RhsContext {
    pub problem: ProblemSpec,
    pub mesh: Mesh,
    pub transform: TransformInfo,
    pub guards: Guards,
    pub ramp: Option<DirichletRamp>,
}

/// Unpacked state: all node values `W_0..W_N` and the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub c: Vec<f64>,
    pub s: f64,
}

impl RhsContext {
    pub fn new(problem: ProblemSpec, mesh: Mesh, guards: Guards) -> Result<Self, SemidiscreteError> {
        if matches!(problem.variant, Variant::Classical(_)) {
            return Err(SemidiscreteError::ClassicalVariant);
        }
        let transform = validate(&problem)?;
        Ok(RhsContext { problem, mesh, transform, guards, ramp: None })
    }

    pub fn first_unknown(&self) -> usize {
        match self.problem.boundary {
            BoundaryCondition::Dirichlet(_) => 1,
            _ => 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mesh.intervals() - self.first_unknown() + 1
    }

    /// Dirichlet value of `w` at `y = 0`, if any.
    pub fn boundary_value(&self, t: f64) -> Option<f64> {
        let BoundaryCondition::Dirichlet(phi) = &self.problem.boundary else {
            return None;
        };
        let target = phi.at(t).max(0.0).powf(1.0 / self.transform.exponent);
        Some(match self.ramp {
            Some(r) if r.duration > 0.0 && t < r.duration => {
                r.initial + (target - r.initial) * smoothstep(t / r.duration)
            }
            _ => target,
        })
    }

    pub fn pack(&self, c: &[f64], s: f64) -> Vec<f64> {
        let n = self.mesh.intervals();
        let mut v = c[self.first_unknown()..n].to_vec();
        v.push(s);
        v
    }

    pub fn unpack(&self, t: f64, y: &[f64]) -> State {
        let n = self.mesh.intervals();
        let k = self.first_unknown();
        let mut c = Vec::with_capacity(n + 1);
        if let Some(v) = self.boundary_value(t) {
            c.push(v);
        }
        c.extend_from_slice(&y[..n - k]);
        c.push(0.0);
        State { c, s: y[n - k] }
    }

    fn slope_sample(&self, w: &[f64], s: f64, t: f64) -> BoundarySlopeSample {
        let n = self.mesh.intervals();
        let dy = self.mesh.slope_at_interface(w[n - 2], w[n - 1]);
        let mut sample = BoundarySlopeSample::new(dy / s, s, t);
        if matches!(self.problem.variant, Variant::Oxygen(_)) {
            sample.d2w_dx2 = self.mesh.curvature_at_interface(w[n - 3], w[n - 2], w[n - 1]) / (s * s);
        }
        sample
    }

    /// Interface speed for the given full node vector.
    pub fn interface_speed(&self, w: &[f64], s: f64, t: f64) -> Result<f64, SemidiscreteError> {
        let sample = self.slope_sample(w, s, t);
        let g = self.guards.slope_guard;
        Ok(match &self.problem.variant {
            Variant::PowerLaw(p) => speed_power_law(&sample, p, &self.transform, g)?,
            Variant::Generalized(p, coeffs) => speed_generalized(&sample, coeffs, p, &self.transform, g)?,
            Variant::Oxygen(o) => speed_oxygen(&sample, o)?,
            Variant::Contaminant(c) => speed_contaminant(&sample, c),
            Variant::Classical(_) => return Err(SemidiscreteError::ClassicalVariant),
        })
    }

    fn ghost(&self, w: &[f64], s: f64, t: f64) -> Result<f64, SemidiscreteError> {
        match (&self.problem.boundary, &self.problem.variant) {
            (BoundaryCondition::Flux(q), Variant::PowerLaw(p)) => {
                ghost_value(w[1], w[0], s, q.at(t), p, p.b0, 1.0, self.transform.exponent, self.mesh.alpha[1])
            }
            (BoundaryCondition::Flux(q), Variant::Generalized(p, c)) => ghost_value(
                w[1],
                w[0],
                s,
                q.at(t),
                p,
                c.b0.value(0.0, t),
                c.g.at(t),
                self.transform.exponent,
                self.mesh.alpha[1],
            ),
            _ => Ok(w[1]),
        }
    }

    /// Evaluates the derivative of the packed state.
    pub fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), SemidiscreteError> {
        let expected = self.dim();
        if y.len() != expected || dydt.len() != expected {
            return Err(SemidiscreteError::DimensionMismatch { got: y.len(), expected });
        }
        let State { c: w, s } = self.unpack(t, y);
        let n = self.mesh.intervals();
        let k = self.first_unknown();
        let q = self.interface_speed(&w, s, t)?;
        let ghost = if k == 0 { self.ghost(&w, s, t)? } else { 0.0 };
        for i in k..n {
            let left = if i == 0 { ghost } else { w[i - 1] };
            let (d1, d2) = self.mesh.stencils[i].apply(left, w[i], w[i + 1]);
            let yi = self.mesh.y[i];
            let bulk = self.bulk(w[i], d1 / s, d2 / (s * s), yi * s, t);
            let v = bulk + yi * q / s * d1;
            if !v.is_finite() {
                return Err(SemidiscreteError::NonfiniteRhs { index: i, t });
            }
            dydt[i - k] = v;
        }
        if !q.is_finite() {
            return Err(SemidiscreteError::NonfiniteRhs { index: n, t });
        }
        dydt[n - k] = q;
        Ok(())
    }

    /// Fixed-`x` time derivative of `w` at one node (no Landau drift).
    fn bulk(&self, c: f64, wx: f64, wxx: f64, x: f64, t: f64) -> f64 {
        let c = c.max(0.0);
        let beta = self.transform.exponent;
        match &self.problem.variant {
            Variant::PowerLaw(p) => power_law_bulk(p, beta, c, wx, wxx, 1.0, p.b0, 0.0, p.c0),
            Variant::Generalized(p, co) => generalized_bulk(p, co, beta, c, wx, wxx, x, t),
            Variant::Oxygen(o) => oxygen_bulk(o, beta, c, wx, wxx, x, t),
            Variant::Contaminant(cp) => contaminant_rate(cp, beta, c, wx, wxx),
            Variant::Classical(_) => f64::NAN,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn power_law_bulk(p: &PowerLawParams, beta: f64, c: f64, wx: f64, wxx: f64, g: f64, b0: f64, b0x: f64, c0: f64) -> f64 {
    let n = p.n;
    let nb = n * beta;
    let k = (n - 1.0) * beta;
    let diffusion = g * (n * c.powf(k) * wxx + n * (nb - 1.0) * c.powf(k - 1.0) * wx * wx);
    let mut v = diffusion;
    if b0 != 0.0 {
        v += b0 * p.gamma * c.powf((p.gamma - 1.0) * beta) * wx;
    }
    if b0x != 0.0 {
        v += b0x * c.powf((p.gamma - 1.0) * beta + 1.0) / beta;
    }
    if c0 != 0.0 {
        v += c0 / beta * c.powf((p.m - 1.0) * beta + 1.0);
    }
    for term in &p.extra_reactions {
        v += term.coefficient / beta * c.powf((term.exponent - 1.0) * beta + 1.0);
    }
    v
}

#[allow(clippy::too_many_arguments)]
fn generalized_bulk(
    p: &PowerLawParams,
    co: &GeneralizedCoefficients,
    beta: f64,
    c: f64,
    wx: f64,
    wxx: f64,
    x: f64,
    t: f64,
) -> f64 {
    let c0 = if co.c0.is_zero() { 0.0 } else { co.c0.value(x, t) * co.p0 };
    power_law_bulk(p, beta, c, wx, wxx, co.g.at(t), co.b0.value(x, t), co.b0.dx(x, t), c0)
}

fn oxygen_bulk(o: &OxygenParams, alpha: f64, c: f64, wx: f64, wxx: f64, x: f64, t: f64) -> f64 {
    let a0 = o.a0.value(x, t);
    let a0x = o.a0.dx(x, t);
    let a0xx = o.a0.dxx(x, t);
    let b0 = o.b0.value(x, t);
    let b0x = o.b0.dx(x, t);
    let c0 = o.c0.value(x, t);
    let quotient =
        if c > 0.0 { ((alpha - 1.0) * a0 * wx * wx + c0 / alpha * c.powf((o.m - 1.0) * alpha + 2.0)) / c } else { 0.0 };
    a0 * wxx + quotient + (b0 + 2.0 * a0x) * wx + (a0xx + b0x) * c / alpha
}

/// Fixed-`x` rate of `w` for the adsorption model, with the `w^-1` singularity cancelled.
pub fn contaminant_rate(cp: &ContaminantParams, beta: f64, c: f64, wx: f64, wxx: f64) -> f64 {
    let numerator = cp.d * (beta - 1.0) * wx * wx + cp.d * c * wxx - cp.v * c * wx;
    let sat = 1.0 + cp.b * c.powf(beta * cp.p);
    numerator / (c + cp.rho * cp.a * cp.p / (sat * sat))
}

impl OdeSystem for RhsContext {
    fn dim(&self) -> usize {
        RhsContext::dim(self)
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        RhsContext::rhs(self, t, y, dydt).map_err(|e| RhsError::new(e.to_string()))
    }

    fn audit(&self, y: &[f64]) -> u64 {
        y[..y.len() - 1].iter().filter(|v| **v < 0.0).count() as u64
    }
}

/// Conservative three-point scheme for `u_t = (u^p)_xx` on a fixed grid.
///
/// `u` holds `C_0..C_{N-1}`; `C_N = 0`. `x` holds all `N + 1` grid points.
pub fn rhs_classical(u: &[f64], x: &[f64], p: f64, dudt: &mut [f64]) -> Result<(), SemidiscreteError> {
    let n = x.len() - 1;
    if u.len() != n || dudt.len() != n {
        return Err(SemidiscreteError::DimensionMismatch { got: u.len(), expected: n });
    }
    let pw = |i: usize| if i >= n { 0.0 } else { u[i].max(0.0).powf(p) };
    let a1 = x[1] - x[0];
    let c0 = u[0].max(0.0);
    dudt[0] = 2.0 * p / (a1 * a1) * (u.get(1).copied().unwrap_or(0.0) - u[0]) * c0.powf(p - 1.0);
    for i in 1..n {
        let a = x[i] - x[i - 1];
        let b = x[i + 1] - x[i];
        dudt[i] = 2.0 / ((a + b) * a * b) * (b * pw(i - 1) + a * pw(i + 1) - (a + b) * pw(i));
    }
    for (i, v) in dudt.iter().enumerate() {
        if !v.is_finite() {
            return Err(SemidiscreteError::NonfiniteRhs { index: i, t: f64::NAN });
        }
    }
    Ok(())
}

/// The classical baseline on `x_i = L y_i` as an ODE system.
#[derive(Debug, Clone)]
pub struct ClassicalSystem {
    pub params: ClassicalParams,
    pub x: Vec<f64>,
}

impl ClassicalSystem {
    pub fn new(params: ClassicalParams, mesh: &Mesh) -> Self {
        ClassicalSystem { params, x: mesh.y.iter().map(|y| y * params.length).collect() }
    }
}

impl OdeSystem for ClassicalSystem {
    fn dim(&self) -> usize {
        self.x.len() - 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), RhsError> {
        rhs_classical(y, &self.x, self.params.n, dydt).map_err(|e| RhsError::new(e.to_string()))
    }

    fn audit(&self, y: &[f64]) -> u64 {
        y.iter().filter(|v| **v < 0.0).count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{barenblatt, turbulent, AnalyticSolution};
    use crate::meshing::MeshSpec;
    use crate::problem::{FieldFn, InitialProfile, TimeFn};

    fn context(variant: Variant, boundary: BoundaryCondition, n: usize) -> RhsContext {
        let problem = ProblemSpec { variant, boundary, initial: InitialProfile::new(1.0, |_| 1.0) };
        RhsContext::new(problem, Mesh::build(&MeshSpec::uniform(n)).unwrap(), Guards::default()).unwrap()
    }

    fn eval(ctx: &RhsContext, t: f64, w: &[f64], s: f64) -> Vec<f64> {
        let y = ctx.pack(w, s);
        let mut out = vec![0.0; y.len()];
        ctx.rhs(t, &y, &mut out).unwrap();
        out
    }

    #[test]
    fn linear_profile_n2() {
        let ctx = context(Variant::PowerLaw(PowerLawParams::porous_medium(2.0)), BoundaryCondition::Symmetry, 10);
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| 1.0 - y).collect();
        let d = eval(&ctx, 0.0, &w, 1.0);
        assert!((d[5] - 1.0).abs() < 1e-12);
        for (di, yi) in d[1..10].iter().zip(&ctx.mesh.y[1..10]) {
            assert!((di - 2.0 * (1.0 - yi)).abs() < 1e-12);
        }
        assert!((d[10] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_is_stationary() {
        let ctx = context(Variant::PowerLaw(PowerLawParams::porous_medium(3.0)), BoundaryCondition::Symmetry, 8);
        let d = eval(&ctx, 0.0, &[0.0; 9], 0.7);
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn barenblatt_front_speed() {
        let b = barenblatt(6.0);
        let ctx = context(Variant::PowerLaw(PowerLawParams::porous_medium(6.0)), BoundaryCondition::Symmetry, 20);
        let s = b.interface(0.0);
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| b.eval(y * s, 0.0).powf(5.0)).collect();
        let d = eval(&ctx, 0.0, &w, s);
        let expected = 2.4 * s.powf(-6.0);
        assert!((d[20] - expected).abs() < 1e-12 * expected);
        assert!((expected - 16.8f64.powf(-6.0 / 7.0) * 2.4).abs() < 1e-15);
    }

    /// Time derivative of `w(s(t) y, t)` along fixed `y`, by central differences.
    fn moving_derivative(sol: &dyn AnalyticSolution, power: f64, y: f64, t: f64) -> f64 {
        let f = |tt: f64| sol.eval(y * sol.interface(tt), tt).powf(power);
        let h = 1e-4;
        (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
    }

    fn consistency_error(sol: &dyn AnalyticSolution, variant: Variant, power: f64, n: usize, t: f64) -> f64 {
        let ctx = context(variant, BoundaryCondition::Symmetry, n);
        let s = sol.interface(t);
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| sol.eval(y * s, t).powf(power)).collect();
        let d = eval(&ctx, t, &w, s);
        (0..n).map(|i| (d[i] - moving_derivative(sol, power, ctx.mesh.y[i], t)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn barenblatt_state_is_reproduced_to_roundoff() {
        // w is quadratic in y, so every stencil is exact.
        let b = barenblatt(6.0);
        let err = consistency_error(&b, Variant::PowerLaw(PowerLawParams::porous_medium(6.0)), 5.0, 16, 1.0);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn second_order_consistency() {
        let tb = turbulent();
        let Variant::PowerLaw(params) = tb.problem().variant else { unreachable!() };
        let e1 = consistency_error(&tb, Variant::PowerLaw(params.clone()), 0.5, 20, 0.3);
        let e2 = consistency_error(&tb, Variant::PowerLaw(params), 0.5, 40, 0.3);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn time_shift_invariance() {
        let ctx =
            context(Variant::PowerLaw(PowerLawParams::new(2.0, 0.0, 1.0, 0.5, 0.0)), BoundaryCondition::Symmetry, 12);
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| (1.0 - y * y) * 0.8).collect();
        assert_eq!(eval(&ctx, 0.0, &w, 1.3), eval(&ctx, 17.5, &w, 1.3));
    }

    #[test]
    fn drift_vanishes_on_flat_state() {
        let ctx = context(Variant::PowerLaw(PowerLawParams::porous_medium(2.0)), BoundaryCondition::Symmetry, 10);
        let w: Vec<f64> = (0..=10).map(|i| if i < 10 { 0.5 } else { 0.0 }).collect();
        let d = eval(&ctx, 0.0, &w, 1.0);
        assert!(d[10] > 0.0, "the front moves");
        for (i, di) in d[..8].iter().enumerate() {
            assert!(di.abs() < 1e-14, "node {i}");
        }
    }

    #[test]
    fn ghost_examples() {
        let p = PowerLawParams::new(2.0, 0.0, 1.0, 0.0, 0.0);
        assert_eq!(ghost_value(0.7, 1.0, 2.0, 0.0, &p, 0.0, 1.0, 1.0, 0.1).unwrap(), 0.7);
        let p = PowerLawParams::new(2.0, 0.0, 1.0, 1.0, 0.0);
        let g = ghost_value(0.5, 1.0, 2.0, 0.3, &p, 1.0, 1.0, 1.0, 0.1).unwrap();
        assert!((g - 0.36).abs() < 1e-15);
        assert_eq!(
            ghost_value(0.5, 0.0, 2.0, 0.3, &p, 1.0, 1.0, 1.0, 0.1),
            Err(SemidiscreteError::BoundaryDegenerate(0.0))
        );
    }

    #[test]
    fn flux_boundary_injects_mass() {
        let ctx = context(
            Variant::PowerLaw(PowerLawParams::porous_medium(2.0)),
            BoundaryCondition::Flux(TimeFn::constant(1.0)),
            10,
        );
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| 1.0 - y * y).collect();
        let sym = context(Variant::PowerLaw(PowerLawParams::porous_medium(2.0)), BoundaryCondition::Symmetry, 10);
        assert!(eval(&ctx, 0.0, &w, 1.0)[0] > eval(&sym, 0.0, &w, 1.0)[0]);
    }

    #[test]
    fn dirichlet_ramp_and_packing() {
        let mut ctx = context(
            Variant::PowerLaw(PowerLawParams::porous_medium(2.0)),
            BoundaryCondition::Dirichlet(TimeFn::constant(4.0)),
            8,
        );
        assert_eq!(ctx.dim(), 8);
        ctx.ramp = Some(DirichletRamp { initial: 1.0, duration: 0.1 });
        assert_eq!(ctx.boundary_value(0.0), Some(1.0));
        assert!((ctx.boundary_value(0.05).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(ctx.boundary_value(0.2), Some(4.0));
        let st = ctx.unpack(0.2, &ctx.pack(&[9.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0], 1.5));
        assert_eq!(st.c, vec![4.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0]);
        assert_eq!(st.s, 1.5);
    }

    fn oxygen_ctx(n: usize, b0: f64) -> RhsContext {
        context(
            Variant::Oxygen(OxygenParams {
                a0: FieldFn::constant(1.0),
                b0: FieldFn::constant(b0),
                c0: FieldFn::constant(-1.0),
                m: 0.0,
                delta: 1e-3,
            }),
            BoundaryCondition::Symmetry,
            n,
        )
    }

    #[test]
    fn oxygen_linear_profile() {
        let ctx = oxygen_ctx(10, 0.0);
        for k in [0.3f64, 1.0, 0.5f64.sqrt()] {
            let w: Vec<f64> = ctx.mesh.y.iter().map(|y| k * (1.0 - y)).collect();
            let d = eval(&ctx, 0.0, &w, 1.0);
            let q = d[10];
            for i in 1..10 {
                let drift = ctx.mesh.y[i] * q * (-k);
                let expected = (k * k - 0.5) / w[i] + drift;
                assert!((d[i] - expected).abs() < 1e-12 * (1.0 + expected.abs()), "k={k} i={i}");
            }
            if (k * k - 0.5).abs() < 1e-15 {
                assert!(d[1..10].iter().all(|v| v.abs() < 1e-12), "interior nodes are stationary");
            }
        }
    }

    #[test]
    fn oxygen_zero_state() {
        let ctx = oxygen_ctx(8, 0.25);
        let d = eval(&ctx, 0.0, &[0.0; 9], 1.0);
        assert!(d[..8].iter().all(|v| *v == 0.0));
        assert_eq!(d[8], -0.25);
    }

    /// `-F / w_x` at the front, where `F` is the fixed-`x` bulk operator, reproduces
    /// the oxygen interface law including the `x`-dependent coefficient terms.
    #[test]
    fn oxygen_law_is_the_bulk_limit() {
        let (a, ax, cc, cx, m) = (1.3, 0.4, -0.9, 0.25, 0.3);
        let o = OxygenParams {
            a0: FieldFn::affine(a, ax, 0.0),
            b0: FieldFn::constant(0.2),
            c0: FieldFn::affine(cc, cx, 0.0),
            m,
            delta: 1e-3,
        };
        let alpha = 2.0 / (1.0 - m);
        let s = 1.0;
        let (a_s, c_s) = (a + ax * s, cc + cx * s);
        let d = (-c_s / (alpha * (alpha - 1.0) * a_s)).sqrt();
        let e = 0.37;
        // w(x) = d r + e r^2, r = s - x; one-sided limit of the bulk operator along x -> s.
        let bulk = |r: f64| {
            let w = d * r + e * r * r;
            let wx = -(d + 2.0 * e * r);
            let x = s - r;
            let c0 = cc + cx * x;
            let a0 = a + ax * x;
            let quotient = ((alpha - 1.0) * a0 * wx * wx + c0 / alpha) / w;
            a0 * 2.0 * e + quotient + (0.2 + 2.0 * ax) * wx
        };
        let limit = 2.0 * bulk(1e-5) - bulk(2e-5);
        let oracle = -limit / (-d);
        let mut sample = BoundarySlopeSample::new(-d, s, 0.0);
        sample.d2w_dx2 = 2.0 * e;
        let law = speed_oxygen(&sample, &o).unwrap();
        assert!((law - oracle).abs() < 1e-6 * oracle.abs().max(1.0), "{law} vs {oracle}");
    }

    fn contaminant(b: f64) -> ContaminantParams {
        ContaminantParams { d: 0.05, v: 1.0, rho: 1.0, a: 1.0, b, p: 0.5 }
    }

    #[test]
    fn contaminant_example() {
        let ctx = context(Variant::Contaminant(contaminant(0.0)), BoundaryCondition::Symmetry, 10);
        let w: Vec<f64> = ctx.mesh.y.iter().map(|y| 1.0 - y).collect();
        assert!((contaminant_rate(&contaminant(0.0), 2.0, 1.0, -1.0, 0.0) - 0.7).abs() < 1e-15);
        let d = eval(&ctx, 0.0, &w, 1.0);
        let q = d[10];
        let (y, c) = (ctx.mesh.y[4], w[4]);
        let expected = (0.05 + 1.0 * c) / (c + 0.5) - y * q;
        assert!((d[4] - expected).abs() < 1e-12);
    }

    #[test]
    fn contaminant_constant_state() {
        let c = ContaminantParams { v: 0.0, ..contaminant(1.0) };
        assert_eq!(contaminant_rate(&c, 2.0, 0.8, 0.0, 0.0), 0.0);
    }

    #[test]
    fn contaminant_front_limit() {
        for b in [0.0, 1.0] {
            let c = contaminant(b);
            let beta = 2.0;
            for k in [0.5, 1.0, 3.0] {
                let f = contaminant_rate(&c, beta, 1e-14, -k, 0.0);
                let law = speed_contaminant(&BoundarySlopeSample::new(-k, 1.0, 0.0), &c);
                assert!((-f / (-k) - law).abs() < 1e-8 * law);
            }
        }
    }

    #[test]
    fn classical_examples() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let mut d = [0.0; 3];
        rhs_classical(&[2.0, 2.0, 2.0], &[0.0, 1.0, 2.0, 3.0], 3.0, &mut d).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
        rhs_classical(&[9.0, 4.0, 1.0], &x, 1.0, &mut d).unwrap();
        assert_eq!(d[2], 2.0);
        rhs_classical(&[9.0, 1.0, 1.0], &x, 2.0, &mut d).unwrap();
        assert_eq!(d[2], -1.0);
        assert_eq!(d[0], 2.0 * 2.0 * (1.0 - 9.0) * 9.0);
    }

    #[test]
    fn classical_nonuniform_matches_quadratic() {
        let x = [0.0, 0.5, 1.5, 2.0, 4.0];
        let u = [1.0, 1.25, 3.25, 5.0];
        let mut d = [0.0; 4];
        rhs_classical(&u, &x, 1.0, &mut d).unwrap();
        // u = 1 + x^2 at x = 0.5 and 1.5 (the C_N = 0 pin only touches the last node)
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert!((d[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extinction_examples() {
        let g = Guards { s_min: 1e-3, ..Guards::default() };
        assert_eq!(extinction_check(&[0.0, 0.0], 1.0, &g), ExtinctionStatus::Extinct);
        assert_eq!(extinction_check(&[1.0, 0.0], 1.0, &g), ExtinctionStatus::Continue);
        assert_eq!(extinction_check(&[1.0, 0.0], 1e-4, &g), ExtinctionStatus::Extinct);
    }

    #[test]
    fn rejects_wrong_dimension_and_classical() {
        let ctx = context(Variant::PowerLaw(PowerLawParams::porous_medium(2.0)), BoundaryCondition::Symmetry, 6);
        let mut out = vec![0.0; 3];
        assert!(matches!(ctx.rhs(0.0, &[1.0, 2.0, 3.0], &mut out), Err(SemidiscreteError::DimensionMismatch { .. })));
        let problem = ProblemSpec {
            variant: Variant::Classical(ClassicalParams { n: 6.0, length: 10.0 }),
            boundary: BoundaryCondition::Symmetry,
            initial: InitialProfile::new(1.0, |_| 1.0),
        };
        let mesh = Mesh::build(&MeshSpec::uniform(6)).unwrap();
        assert!(matches!(RhsContext::new(problem, mesh, Guards::default()), Err(SemidiscreteError::ClassicalVariant)));
    }
}
