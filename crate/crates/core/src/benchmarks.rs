//! Closed-form solutions used as oracles, and the matching problem setups.

use crate::problem::{BoundaryCondition, InitialProfile, PowerLawParams, ProblemSpec, ReactionTerm, Variant};

/// An exact solution with a compactly supported profile `u(., t)` on `[0, s(t)]`.
pub trait AnalyticSolution: Send + Sync {
    fn name(&self) -> &'static str;

    fn eval(&self, x: f64, t: f64) -> f64;

    /// Support radius; zero after extinction.
    fn interface(&self, t: f64) -> f64;

    /// Problem whose solution this is, started at `t = 0`.
    fn problem(&self) -> ProblemSpec;
}

/// Source solution of `u_t = (u^n)_xx` with unit mass at `t = -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barenblatt {
    pub n: f64,
}

pub fn barenblatt(n: f64) -> Barenblatt {
    Barenblatt { n }
}

impl Barenblatt {
    pub fn speed(&self, t: f64) -> f64 {
        self.interface(t) / ((self.n + 1.0) * (t + 1.0))
    }
}

impl AnalyticSolution for Barenblatt {
    fn name(&self) -> &'static str {
        "barenblatt"
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let s = self.interface(t);
        let r = x / s;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - r * r).powf(1.0 / (self.n - 1.0)) / s
    }

    fn interface(&self, t: f64) -> f64 {
        let n = self.n;
        (2.0 * n * (n + 1.0) / (n - 1.0) * (t + 1.0)).powf(1.0 / (n + 1.0))
    }

    fn problem(&self) -> ProblemSpec {
        let me = *self;
        ProblemSpec {
            variant: Variant::PowerLaw(PowerLawParams::porous_medium(self.n)),
            boundary: BoundaryCondition::Symmetry,
            initial: InitialProfile::new(self.interface(0.0), move |x| me.eval(x, 0.0)),
        }
    }
}

/// Porous medium equation with strong adsorption, `u_t = (u^p)_xx - C0 u^(2-p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kersner {
    pub p: f64,
    pub c0: f64,
    pub alpha: f64,
    pub l0: f64,
}

pub fn kersner(p: f64, c0: f64, alpha: f64, l0: f64) -> Kersner {
    Kersner { p, c0, alpha, l0 }
}

impl Kersner {
    /// `a(t)`, linear in time.
    pub fn scale(&self, t: f64) -> f64 {
        self.scale_rate() * t + (self.p - 1.0) * self.alpha
    }

    fn scale_rate(&self) -> f64 {
        let p = self.p;
        2.0 * p * (p + 1.0) / (p - 1.0)
    }

    fn coefficients(&self) -> (f64, f64) {
        let p = self.p;
        let pa = (p - 1.0) * self.alpha;
        let a = (self.c0 * (p - 1.0).powi(4) * self.alpha.powi(2) + 4.0 * p * p * self.l0 * self.l0)
            / (4.0 * p * p * pa.powf(2.0 / (p + 1.0)));
        let b = self.c0 * (p - 1.0).powi(2) / (4.0 * p * p);
        (a, b)
    }

    /// `s(t)^2` as a function of `a(t)`; negative after extinction.
    pub fn support_squared(&self, t: f64) -> f64 {
        let (a, b) = self.coefficients();
        let sc = self.scale(t);
        a * sc.powf(2.0 / (self.p + 1.0)) - b * sc * sc
    }

    pub fn extinction_time(&self) -> f64 {
        let (a, b) = self.coefficients();
        let p = self.p;
        let sc = (a / b).powf((p + 1.0) / (2.0 * p));
        (sc - (p - 1.0) * self.alpha) / self.scale_rate()
    }

    /// Time of the largest support radius.
    pub fn argmax_time(&self) -> f64 {
        let (a, b) = self.coefficients();
        let p = self.p;
        let sc = (a / (b * (p + 1.0))).powf((p + 1.0) / (2.0 * p));
        ((sc - (p - 1.0) * self.alpha) / self.scale_rate()).max(0.0)
    }
}

impl AnalyticSolution for Kersner {
    fn name(&self) -> &'static str {
        "kersner"
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let bracket = self.support_squared(t) - x * x;
        if bracket <= 0.0 {
            return 0.0;
        }
        let q = 1.0 / (self.p - 1.0);
        (bracket / self.scale(t)).powf(q)
    }

    fn interface(&self, t: f64) -> f64 {
        self.support_squared(t).max(0.0).sqrt()
    }

    fn problem(&self) -> ProblemSpec {
        let me = *self;
        ProblemSpec {
            variant: Variant::PowerLaw(PowerLawParams::new(self.p, 2.0 - self.p, 1.0, 0.0, -self.c0)),
            boundary: BoundaryCondition::Symmetry,
            initial: InitialProfile::new(self.l0, move |x| me.eval(x, 0.0)),
        }
    }
}

/// `u_t = (u^{3/2})_xx - u^{3/2} + u^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Turbulent;

pub fn turbulent() -> Turbulent {
    Turbulent
}

impl Turbulent {
    pub fn scale(&self, t: f64) -> f64 {
        let k = 1.0 + std::f64::consts::SQRT_2;
        2.0 * k * (-5.0 * t / 6.0).exp() / (k * k - (-5.0 * t / 3.0).exp())
    }

    pub fn speed(&self, _t: f64) -> f64 {
        2.5
    }
}

impl AnalyticSolution for Turbulent {
    fn name(&self) -> &'static str {
        "turbulent"
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let a = self.scale(t);
        let inner = 1.0 - (x / 3.0).cosh() / (1.0 / (a * a) + 1.0).sqrt();
        if inner <= 0.0 {
            return 0.0;
        }
        (a * a + 1.0) * inner * inner
    }

    fn interface(&self, t: f64) -> f64 {
        3.0 * (1.0 / self.scale(t)).asinh()
    }

    fn problem(&self) -> ProblemSpec {
        let mut params = PowerLawParams::new(1.5, 0.5, 1.0, 0.0, 1.0);
        params.extra_reactions.push(ReactionTerm { coefficient: -1.0, exponent: 1.5 });
        ProblemSpec {
            variant: Variant::PowerLaw(params),
            boundary: BoundaryCondition::Symmetry,
            initial: InitialProfile::new(self.interface(0.0), |x| Turbulent.eval(x, 0.0)),
        }
    }
}

/// Bump `(1 - (x/L0)^2)_+^(1/(n-1))` used by the demo models without an oracle.
fn bump(n: f64, l0: f64) -> InitialProfile {
    InitialProfile::new(l0, move |x| (1.0 - (x / l0).powi(2)).max(0.0).powf(1.0 / (n - 1.0)))
}

/// Foam drainage, `u_t = (u^{3/2})_xx + (u^2)_x`.
pub fn foam_drainage() -> ProblemSpec {
    ProblemSpec {
        variant: Variant::PowerLaw(PowerLawParams::new(1.5, 0.0, 2.0, 1.0, 0.0)),
        boundary: BoundaryCondition::Symmetry,
        initial: bump(1.5, 1.0),
    }
}

/// Viscous liquid spreading, `u_t = (u^4)_xx + (u^3)_x`.
pub fn viscous_liquid() -> ProblemSpec {
    ProblemSpec {
        variant: Variant::PowerLaw(PowerLawParams::new(4.0, 0.0, 3.0, 1.0, 0.0)),
        boundary: BoundaryCondition::Symmetry,
        initial: bump(4.0, 1.0),
    }
}

/// Looks up an oracle by name with its default parameters.
pub fn oracle_by_name(name: &str) -> Option<Box<dyn AnalyticSolution>> {
    let lower = name.to_ascii_lowercase();
    let (head, arg) = match lower.split_once(':') {
        Some((h, a)) => (h.to_string(), Some(a.to_string())),
        None => (lower.clone(), None),
    };
    match head.as_str() {
        "barenblatt" => {
            let n = arg.map_or(Some(6.0), |a| a.parse().ok())?;
            Some(Box::new(barenblatt(n)))
        }
        "kersner" => {
            let p = arg.map_or(Some(1.8), |a| a.parse().ok())?;
            Some(Box::new(kersner(p, 1.0, 1.0, 1.0)))
        }
        "turbulent" => Some(Box::new(turbulent())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Sixth-order central differences for the residual oracle.
    fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h) - 9.0 * f(x + 2.0 * h)
            + f(x + 3.0 * h))
            / (60.0 * h)
    }

    fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (2.0 * f(x - 3.0 * h) - 27.0 * f(x - 2.0 * h) + 270.0 * f(x - h) - 490.0 * f(x) + 270.0 * f(x + h)
            - 27.0 * f(x + 2.0 * h)
            + 2.0 * f(x + 3.0 * h))
            / (180.0 * h * h)
    }

    #[test]
    fn barenblatt_values() {
        let b = barenblatt(6.0);
        assert!(rel(b.interface(0.0), 1.49638) < 1e-5);
        assert!(rel(b.eval(0.0, 0.0), 0.66828) < 1e-5);
        assert!(rel(b.interface(200.0), 3.1921) < 1e-4);
        assert_eq!(b.eval(b.interface(3.0), 3.0), 0.0);
        assert_eq!(b.eval(10.0, 3.0), 0.0);
    }

    #[test]
    fn kersner_values() {
        let k = kersner(1.8, 1.0, 1.0, 1.0);
        assert!(rel(k.eval(0.0, 0.0), 0.8f64.powf(-1.25)) < 1e-14);
        assert!(rel(k.interface(0.0), 1.0) < 1e-14);
        assert!(rel(k.extinction_time(), 0.891_692_153_234_872_7) < 1e-12);
        assert!(rel(k.argmax_time(), 0.365_350_178_375_543) < 1e-12);
        assert_eq!(k.interface(1.0), 0.0);
        assert_eq!(k.eval(0.0, 1.0), 0.0);
    }

    #[test]
    fn kersner_extremum_matches_bisection() {
        let k = kersner(1.8, 1.0, 1.0, 1.0);
        let ds = |t: f64| (k.support_squared(t + 1e-7) - k.support_squared(t - 1e-7)) / 2e-7;
        let (mut lo, mut hi) = (0.0, k.extinction_time());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if ds(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - k.argmax_time()).abs() < 1e-6);
        let (mut lo, mut hi) = (k.argmax_time(), 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if k.support_squared(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(rel(0.5 * (lo + hi), k.extinction_time()) < 1e-12);
    }

    #[test]
    fn turbulent_values() {
        let tb = turbulent();
        assert!(rel(tb.scale(0.0), 1.0) < 1e-15);
        assert!(rel(tb.interface(0.0), 3.0 * (1.0 + 2f64.sqrt()).ln()) < 1e-14);
        assert!(rel(tb.interface(0.0), 2.64412) < 1e-5);
        let corner = 2.0 * (1.0 - 1.0 / 2f64.sqrt()).powi(2);
        assert!(rel(tb.eval(0.0, 0.0), corner) < 1e-14);
        let s = |t: f64| tb.interface(t);
        assert!(rel((s(1.0 + 1e-5) - s(1.0 - 1e-5)) / 2e-5, tb.speed(1.0)) < 1e-8);
    }

    fn residual_check(
        sol: &dyn AnalyticSolution,
        n: f64,
        reaction: &dyn Fn(f64) -> f64,
        convect: Option<(f64, f64)>,
        t: f64,
    ) {
        let s = sol.interface(t);
        for frac in [0.1, 0.3, 0.5, 0.7] {
            let x = frac * s;
            let ut = d1(&|tt| sol.eval(x, tt), t, 1e-3);
            let diff = d2(&|xx| sol.eval(xx, t).powf(n), x, 1e-3);
            let conv = convect.map_or(0.0, |(b0, g)| b0 * d1(&|xx| sol.eval(xx, t).powf(g), x, 1e-3));
            let r = reaction(sol.eval(x, t));
            let scale = ut.abs() + diff.abs() + r.abs() + conv.abs();
            assert!((ut - diff - conv - r).abs() < 1e-4 * scale, "{} x={x} t={t}", sol.name());
        }
    }

    #[test]
    fn pde_residuals_vanish() {
        residual_check(&barenblatt(3.0), 3.0, &|_| 0.0, None, 0.5);
        residual_check(&barenblatt(6.0), 6.0, &|_| 0.0, None, 2.0);
        let k = kersner(1.8, 1.0, 1.0, 1.0);
        residual_check(&k, 1.8, &|u| -u.powf(0.2), None, 0.2);
        residual_check(&turbulent(), 1.5, &|u| -u.powf(1.5) + u.sqrt(), None, 0.4);
    }

    #[test]
    fn interface_is_support_edge() {
        let k = kersner(1.8, 1.0, 1.0, 1.0);
        let sols: [(&dyn AnalyticSolution, f64); 4] =
            [(&barenblatt(2.0), 1.0), (&barenblatt(6.0), 50.0), (&k, 0.5), (&turbulent(), 1.0)];
        for (sol, t) in sols {
            let s = sol.interface(t);
            assert!(sol.eval(s * (1.0 - 1e-9), t) > 0.0, "{}", sol.name());
            assert_eq!(sol.eval(s * (1.0 + 1e-9), t), 0.0, "{}", sol.name());
        }
    }

    #[test]
    fn barenblatt_mass_is_conserved() {
        let b = barenblatt(6.0);
        let mass = |t: f64| {
            let s = b.interface(t);
            let k = 200_000;
            let h = s / k as f64;
            (0..k).map(|i| b.eval((i as f64 + 0.5) * h, t)).sum::<f64>() * h
        };
        let m0 = mass(0.0);
        for t in [1.0, 10.0, 200.0] {
            assert!(rel(mass(t), m0) < 1e-6);
        }
    }

    #[test]
    fn oracle_lookup() {
        assert_eq!(oracle_by_name("Barenblatt").unwrap().name(), "barenblatt");
        assert!(rel(oracle_by_name("barenblatt:3").unwrap().interface(0.0), barenblatt(3.0).interface(0.0)) < 1e-15);
        assert_eq!(oracle_by_name("kersner").unwrap().name(), "kersner");
        assert!(oracle_by_name("barenblatt:x").is_none());
        assert!(oracle_by_name("nope").is_none());
    }
}
