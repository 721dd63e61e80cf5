//! Flat `key = value` experiment configuration with dotted namespaces.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use frontmol_core::benchmarks::{oracle_by_name, AnalyticSolution};
use frontmol_core::meshing::{Mesh, MeshSpec};
use frontmol_core::problem::{
    validate, BoundaryCondition, ClassicalParams, ContaminantParams, FieldFn, GeneralizedCoefficients, InitialProfile,
    OxygenParams, PowerLawParams, ProblemSpec, ReactionTerm, TimeFn, Variant, DEFAULT_FLOOR,
};
use frontmol_core::solve::SolveOptions;
use frontmol_core::stiff_ode::Tolerances;

const NAMESPACES: [&str; 9] =
    ["problem", "boundary", "initial", "mesh", "solver", "time", "output", "compare", "restart"];

/// Parse or validation failure, located by line and field where known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: Option<usize>, field: &str, message: impl Into<String>) -> Self {
        ConfigError { line, field: Some(field.to_string()), message: message.into() }
    }

    fn syntax(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), field: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Key-value pairs as written, before interpretation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| ConfigError::syntax(line, format!("expected `key = value`, got `{trimmed}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            let namespace = key.split_once('.').map(|(ns, _)| ns);
            match namespace {
                Some(ns) if NAMESPACES.contains(&ns) && !key.ends_with('.') => {}
                _ => {
                    return Err(ConfigError::at(
                        Some(line),
                        &key,
                        format!("keys must be `<namespace>.<name>` with namespace one of {}", NAMESPACES.join(", ")),
                    ))
                }
            }
            if value.is_empty() {
                return Err(ConfigError::at(Some(line), &key, "empty value"));
            }
            if let Some(prev) = entries.insert(key.clone(), Entry { value, line: Some(line) }) {
                let first = prev.line.map_or(String::new(), |l| format!(" (first set on line {l})"));
                return Err(ConfigError::at(Some(line), &key, format!("duplicate key{first}")));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), Entry { value: value.into(), line: None });
    }

    pub fn remove_namespace(&mut self, namespace: &str) {
        let prefix = format!("{namespace}.");
        self.entries.retain(|k, _| !k.starts_with(&prefix));
    }

    /// Canonical text: sorted keys, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.value)).collect()
    }
}

/// Tracks which keys were consumed so leftovers can be reported.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Reader { raw, used: RefCell::new(BTreeSet::new()) }
    }

    fn entry(&self, key: &str) -> Option<&'a Entry> {
        let e = self.raw.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw.entries.get(key).and_then(|e| e.line)
    }

    fn text(&self, key: &str) -> Option<&'a str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::at(e.line, key, format!("expected {what}, got `{}`", e.value))),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(ConfigError::at(self.line(key), key, "value must be finite")),
            _ => Ok(v),
        }
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn required(&self, key: &str) -> Result<f64, ConfigError> {
        self.number(key)?.ok_or_else(|| missing(key))
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(key, "a nonnegative integer")
    }

    fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        Ok(self.parsed(key, "`true` or `false`")?.unwrap_or(false))
    }

    fn finish(self) -> Result<(), ConfigError> {
        let used = self.used.into_inner();
        match self.raw.entries.iter().find(|(k, _)| !used.contains(*k)) {
            Some((k, e)) => Err(ConfigError::at(e.line, k, "unknown key or not used by this configuration")),
            None => Ok(()),
        }
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError::at(None, key, "required field is missing")
}

/// Donor run and stored section a restart starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartPoint {
    pub from: PathBuf,
    pub at: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub name: String,
    pub problem: ProblemSpec,
    pub mesh: MeshSpec,
    pub options: SolveOptions,
    pub oracle: Option<String>,
    pub mesh_dump: bool,
    pub restart: Option<RestartPoint>,
}

impl ExperimentConfig {
    pub fn parse(text: &str, default_name: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?, default_name)
    }

    pub fn from_raw(raw: RawConfig, default_name: &str) -> Result<Self, ConfigError> {
        let r = Reader::new(&raw);
        let name = r.text("output.name").unwrap_or(default_name).to_string();
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(ConfigError::at(r.line("output.name"), "output.name", "must be a plain directory name"));
        }
        let mesh_dump = r.flag("output.mesh_dump")?;
        let oracle = match r.text("compare.oracle") {
            Some(o) => {
                lookup_oracle(o).map_err(|m| ConfigError::at(r.line("compare.oracle"), "compare.oracle", m))?;
                Some(o.to_string())
            }
            None => None,
        };
        let options = read_options(&r)?;
        let mesh = read_mesh(&r)?;
        Mesh::build(&mesh).map_err(|e| ConfigError::at(None, "mesh", e.to_string()))?;
        let variant = read_variant(&r)?;
        let boundary = read_boundary(&r)?;
        let initial = read_initial(&r, &variant, oracle.as_deref(), options.t_start)?;
        let restart = read_restart(&r, options.t_start)?;
        r.finish()?;
        let problem = ProblemSpec { variant, boundary, initial };
        validate(&problem).map_err(|e| ConfigError::at(None, "problem", e.to_string()))?;
        let mut raw = raw.clone();
        raw.set("output.name", name.clone());
        Ok(ExperimentConfig { raw, name, problem, mesh, options, oracle, mesh_dump, restart })
    }

    pub fn analytic(&self) -> Option<Box<dyn AnalyticSolution>> {
        self.oracle.as_deref().and_then(oracle_by_name)
    }
}

pub fn lookup_oracle(name: &str) -> Result<Box<dyn AnalyticSolution>, String> {
    oracle_by_name(name)
        .ok_or_else(|| format!("unknown oracle `{name}` (expected barenblatt[:n], kersner[:p] or turbulent)"))
}

fn read_options(r: &Reader) -> Result<SolveOptions, ConfigError> {
    let d = SolveOptions::default();
    let mut tol = Tolerances::new(r.number_or("solver.rtol", 1e-6)?, r.number_or("solver.atol", 1e-9)?);
    if let Some(order) = r.count("solver.max_order")? {
        tol.max_order = order;
    }
    tol.max_step = r.number("solver.max_step")?;
    tol.initial_step = r.number("solver.initial_step")?;
    tol.fixed_step = r.number("solver.fixed_step")?;
    let sections = r.count("time.sections")?.unwrap_or(d.sections);
    if sections == 0 {
        return Err(ConfigError::at(r.line("time.sections"), "time.sections", "need at least one section"));
    }
    let t_start = r.number_or("time.start", 0.0)?;
    let t_end = r.required("time.end")?;
    if !(t_end > t_start) {
        return Err(ConfigError::at(r.line("time.end"), "time.end", format!("must exceed time.start = {t_start}")));
    }
    Ok(SolveOptions {
        t_start,
        t_end,
        sections,
        tolerances: tol,
        floor: r.number_or("solver.floor", DEFAULT_FLOOR)?,
        slope_guard: r.number_or("solver.slope_guard", d.slope_guard)?,
        extinction_floor: r.number_or("solver.extinction_floor", d.extinction_floor)?,
        s_min_fraction: r.number_or("solver.s_min_fraction", d.s_min_fraction)?,
        ramp_fraction: r.number_or("solver.ramp_fraction", d.ramp_fraction)?,
    })
}

fn read_mesh(r: &Reader) -> Result<MeshSpec, ConfigError> {
    let strategy = r.text("mesh.strategy").unwrap_or("d4").to_ascii_lowercase();
    let need = |key: &str| -> Result<usize, ConfigError> { r.count(key)?.ok_or_else(|| missing(key)) };
    match strategy.as_str() {
        "d4" => Ok(MeshSpec::Geometric { n: need("mesh.n")?, m: need("mesh.m")? }),
        "d1" | "d2" | "d3" => {
            let power = u32::from(strategy.as_bytes()[1] - b'0');
            Ok(MeshSpec::Subdivided { power, m: need("mesh.m")?, d: need("mesh.d")? })
        }
        other => Err(ConfigError::at(
            r.line("mesh.strategy"),
            "mesh.strategy",
            format!("expected D1, D2, D3 or D4, got `{other}`"),
        )),
    }
}

fn read_extra(r: &Reader) -> Result<Vec<ReactionTerm>, ConfigError> {
    let Some(text) = r.text("problem.extra") else {
        return Ok(Vec::new());
    };
    let bad = || {
        ConfigError::at(
            r.line("problem.extra"),
            "problem.extra",
            format!("expected `coef:exponent[, ...]`, got `{text}`"),
        )
    };
    text.split(',')
        .map(|term| {
            let (c, e) = term.split_once(':').ok_or_else(bad)?;
            let coefficient = c.trim().parse().map_err(|_| bad())?;
            let exponent = e.trim().parse().map_err(|_| bad())?;
            Ok(ReactionTerm { coefficient, exponent })
        })
        .collect()
}

fn field(r: &Reader, name: &str, default: Option<f64>) -> Result<FieldFn, ConfigError> {
    let key = format!("problem.{name}");
    let c = match default {
        Some(d) => r.number_or(&key, d)?,
        None => r.required(&key)?,
    };
    let cx = r.number_or(&format!("problem.{name}_x"), 0.0)?;
    let ct = r.number_or(&format!("problem.{name}_t"), 0.0)?;
    Ok(FieldFn::affine(c, cx, ct))
}

fn read_variant(r: &Reader) -> Result<Variant, ConfigError> {
    let kind = r.text("problem.variant").ok_or_else(|| missing("problem.variant"))?;
    let power_law = |r: &Reader| -> Result<PowerLawParams, ConfigError> {
        let mut p = PowerLawParams::new(
            r.required("problem.n")?,
            r.number_or("problem.m", 0.0)?,
            r.number_or("problem.gamma", 1.0)?,
            0.0,
            0.0,
        );
        p.extra_reactions = read_extra(r)?;
        Ok(p)
    };
    Ok(match kind.to_ascii_lowercase().as_str() {
        "power_law" => {
            let mut p = power_law(r)?;
            p.b0 = r.number_or("problem.b0", 0.0)?;
            p.c0 = r.number_or("problem.c0", 0.0)?;
            Variant::PowerLaw(p)
        }
        "generalized" => {
            let mut p = power_law(r)?;
            let g0 = r.number_or("problem.g", 1.0)?;
            let gt = r.number_or("problem.g_t", 0.0)?;
            let coeffs = GeneralizedCoefficients {
                g: TimeFn::new(move |t| g0 + gt * t),
                b0: field(r, "b0", Some(0.0))?,
                c0: field(r, "c0", Some(0.0))?,
                p0: r.number_or("problem.p0", 1.0)?,
            };
            p.b0 = coeffs.b0.value(0.0, 0.0);
            p.c0 = coeffs.c0.value(0.0, 0.0) * coeffs.p0;
            Variant::Generalized(p, coeffs)
        }
        "oxygen" => Variant::Oxygen(OxygenParams {
            a0: field(r, "a0", None)?,
            b0: field(r, "b0", Some(0.0))?,
            c0: field(r, "c0", None)?,
            m: r.required("problem.m")?,
            delta: r.number_or("problem.delta", 1e-3)?,
        }),
        "contaminant" => Variant::Contaminant(ContaminantParams {
            d: r.required("problem.d")?,
            v: r.number_or("problem.v", 0.0)?,
            rho: r.required("problem.rho")?,
            a: r.required("problem.a")?,
            b: r.number_or("problem.b", 0.0)?,
            p: r.required("problem.p")?,
        }),
        "classical" => {
            Variant::Classical(ClassicalParams { n: r.required("problem.n")?, length: r.required("problem.length")? })
        }
        other => {
            return Err(ConfigError::at(
                r.line("problem.variant"),
                "problem.variant",
                format!("expected power_law, generalized, oxygen, contaminant or classical, got `{other}`"),
            ))
        }
    })
}

fn read_boundary(r: &Reader) -> Result<BoundaryCondition, ConfigError> {
    let kind = r.text("boundary.kind").unwrap_or("symmetry").to_ascii_lowercase();
    let value = |r: &Reader| -> Result<TimeFn, ConfigError> {
        let v0 = r.required("boundary.value")?;
        let vt = r.number_or("boundary.value_t", 0.0)?;
        Ok(TimeFn::new(move |t| v0 + vt * t))
    };
    match kind.as_str() {
        "symmetry" => Ok(BoundaryCondition::Symmetry),
        "dirichlet" => Ok(BoundaryCondition::Dirichlet(value(r)?)),
        "flux" => Ok(BoundaryCondition::Flux(value(r)?)),
        other => Err(ConfigError::at(
            r.line("boundary.kind"),
            "boundary.kind",
            format!("expected symmetry, dirichlet or flux, got `{other}`"),
        )),
    }
}

fn default_bump_exponent(variant: &Variant) -> f64 {
    match variant {
        Variant::PowerLaw(p) | Variant::Generalized(p, _) => 1.0 / (p.n - 1.0),
        Variant::Classical(c) => 1.0 / (c.n - 1.0),
        _ => 1.0,
    }
}

fn read_initial(r: &Reader, variant: &Variant, oracle: Option<&str>, t0: f64) -> Result<InitialProfile, ConfigError> {
    let kind = r.text("initial.profile").ok_or_else(|| missing("initial.profile"))?.to_ascii_lowercase();
    match kind.as_str() {
        "oracle" => {
            let name = r.text("initial.oracle").or(oracle).ok_or_else(|| missing("initial.oracle"))?;
            let analytic: Arc<dyn AnalyticSolution> =
                lookup_oracle(name).map_err(|m| ConfigError::at(r.line("initial.oracle"), "initial.oracle", m))?.into();
            let support = analytic.interface(t0);
            Ok(InitialProfile::new(support, move |x| analytic.eval(x, t0)))
        }
        "bump" => {
            let l0 = r.number_or("initial.support", 1.0)?;
            let amp = r.number_or("initial.amplitude", 1.0)?;
            let e = r.number_or("initial.exponent", default_bump_exponent(variant))?;
            if !(l0 > 0.0) {
                return Err(ConfigError::at(r.line("initial.support"), "initial.support", "must be positive"));
            }
            Ok(InitialProfile::new(l0, move |x| amp * (1.0 - (x / l0).powi(2)).max(0.0).powf(e)))
        }
        "front" => {
            let l0 = r.number_or("initial.support", 1.0)?;
            let amp = r.number_or("initial.amplitude", 1.0)?;
            let e = r.number_or("initial.exponent", default_bump_exponent(variant))?;
            if !(l0 > 0.0) {
                return Err(ConfigError::at(r.line("initial.support"), "initial.support", "must be positive"));
            }
            Ok(InitialProfile::new(l0, move |x| amp * (1.0 - x / l0).max(0.0).powf(e)))
        }
        "zero" => Ok(InitialProfile::zero(r.required("initial.aux_support")?)),
        other => Err(ConfigError::at(
            r.line("initial.profile"),
            "initial.profile",
            format!("expected oracle, bump, front or zero, got `{other}`"),
        )),
    }
}

fn read_restart(r: &Reader, t_start: f64) -> Result<Option<RestartPoint>, ConfigError> {
    let from = r.text("restart.from");
    let at = r.number("restart.at")?;
    match (from, at) {
        (None, None) => Ok(None),
        (Some(from), Some(at)) => {
            if at != t_start {
                return Err(ConfigError::at(
                    r.line("restart.at"),
                    "restart.at",
                    format!("must equal time.start = {t_start}"),
                ));
            }
            Ok(Some(RestartPoint { from: PathBuf::from(from), at }))
        }
        (None, Some(_)) => Err(missing("restart.from")),
        (Some(_), None) => Err(missing("restart.at")),
    }
}

/// Mesh keys for a spec string such as `D4:N=60,M=20` or `D2:M=10,d=4`.
pub fn mesh_keys(spec: &str) -> Result<Vec<(String, String)>, String> {
    let (strategy, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let strategy = strategy.trim().to_ascii_lowercase();
    if !["d1", "d2", "d3", "d4"].contains(&strategy.as_str()) {
        return Err(format!("mesh spec `{spec}`: strategy must be D1, D2, D3 or D4"));
    }
    let mut keys = vec![("mesh.strategy".to_string(), strategy.to_ascii_uppercase())];
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) =
            part.split_once('=').ok_or_else(|| format!("mesh spec `{spec}`: expected KEY=VALUE, got `{part}`"))?;
        let k = k.trim().to_ascii_lowercase();
        if !["n", "m", "d"].contains(&k.as_str()) {
            return Err(format!("mesh spec `{spec}`: unknown key `{k}` (expected N, M or d)"));
        }
        v.trim().parse::<usize>().map_err(|_| format!("mesh spec `{spec}`: `{v}` is not a count"))?;
        keys.push((format!("mesh.{k}"), v.trim().to_string()));
    }
    Ok(keys)
}

/// Parses a mesh spec string into a `MeshSpec`.
pub fn mesh_spec(spec: &str) -> Result<MeshSpec, String> {
    let mut raw = RawConfig::default();
    for (k, v) in mesh_keys(spec)? {
        raw.set(&k, v);
    }
    let r = Reader::new(&raw);
    read_mesh(&r).map_err(|e| format!("mesh spec `{spec}`: {e}"))
}
