//! Parameter sweeps over mesh settings, run in parallel.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::artifacts::num;
use crate::config::{ExperimentConfig, RawConfig};
use crate::run::{run_into, CliError};

pub const SWEEP_HEADER: &str = "label,strategy,n,m,d,al,max_l2,max_s_rel_err,termination,status,message";
pub const ARGMIN_HEADER: &str = "strategy,n,m,d,al";

/// One axis such as `N=M=10,20,50`: every listed key takes the same value.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Axis {
    keys: Vec<&'static str>,
    values: Vec<String>,
}

/// Cartesian product of the axes in a spec like `N=30;M=3..30` or `N=M=10,20,50;strategy=D4`.
pub fn parse_grid(spec: &str) -> Result<Vec<Vec<(&'static str, String)>>, String> {
    let mut axes = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let pieces: Vec<&str> = part.split('=').map(str::trim).collect();
        if pieces.len() < 2 {
            return Err(format!("grid axis `{part}`: expected KEY[=KEY...]=VALUES"));
        }
        let (values, keys) = pieces.split_last().expect("at least two pieces");
        let keys = keys.iter().map(|k| axis_key(k)).collect::<Result<Vec<_>, _>>()?;
        let values = expand_values(values, keys.contains(&"mesh.strategy"))?;
        axes.push(Axis { keys, values });
    }
    if axes.is_empty() {
        return Err("empty grid".into());
    }
    let mut seen = Vec::new();
    for key in axes.iter().flat_map(|a| &a.keys) {
        if seen.contains(key) {
            return Err(format!("grid sets `{key}` twice"));
        }
        seen.push(*key);
    }
    let mut points: Vec<Vec<(&'static str, String)>> = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.extend(axis.keys.iter().map(|k| (*k, v.clone())));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn axis_key(k: &str) -> Result<&'static str, String> {
    match k {
        "N" | "n" => Ok("mesh.n"),
        "M" | "m" => Ok("mesh.m"),
        "d" | "D" => Ok("mesh.d"),
        s if s.eq_ignore_ascii_case("strategy") => Ok("mesh.strategy"),
        other => Err(format!("grid key `{other}` not one of N, M, d, strategy")),
    }
}

fn expand_values(text: &str, strategy: bool) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for v in text.split(',').map(str::trim) {
        if strategy {
            let upper = v.to_ascii_uppercase();
            if !["D1", "D2", "D3", "D4"].contains(&upper.as_str()) {
                return Err(format!("grid strategy `{v}` not one of D1..D4"));
            }
            out.push(upper);
        } else if let Some((a, b)) = v.split_once("..") {
            let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("grid range `{v}` is not integral"));
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(format!("grid range `{v}` is empty"));
            }
            out.extend((a..=b).map(|x| x.to_string()));
        } else {
            v.parse::<usize>().map_err(|_| format!("grid value `{v}` is not a count"))?;
            out.push(v.to_string());
        }
    }
    Ok(out)
}

fn label(point: &[(&'static str, String)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{}{v}", k.trim_start_matches("mesh.").to_ascii_uppercase()))
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub strategy: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub d: Option<usize>,
    pub al: Option<f64>,
    pub max_l2: Option<f64>,
    pub max_s_rel_err: Option<f64>,
    pub termination: String,
    pub error: Option<String>,
}

impl SweepRow {
    fn csv(&self) -> String {
        let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        let optf = |v: Option<f64>| v.map_or(String::new(), num);
        let (status, message) = match &self.error {
            None => ("ok", String::new()),
            Some(m) => ("error", format!("\"{}\"", m.replace('"', "'"))),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{status},{message}\n",
            self.label,
            self.strategy,
            opt(self.n),
            opt(self.m),
            opt(self.d),
            optf(self.al),
            optf(self.max_l2),
            optf(self.max_s_rel_err),
            self.termination
        )
    }
}

/// Runs every grid point under `dir/<label>`; failures are recorded in their row.
pub fn sweep(base: &RawConfig, name: &str, grid: &[Vec<(&'static str, String)>], dir: &Path) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|point| {
            let label = label(point);
            let mut raw = base.clone();
            for (k, v) in point {
                raw.set(k, v.clone());
            }
            raw.set("output.name", format!("{name}-{label}"));
            let outcome = ExperimentConfig::from_raw(raw, name)
                .map_err(|e| CliError::Config { origin: label.clone(), source: e })
                .and_then(|cfg| {
                    if cfg.oracle.is_none() {
                        return Err(CliError::Usage("sweeps need compare.oracle".into()));
                    }
                    let summary = run_into(&cfg, &dir.join(&label))?;
                    Ok((cfg, summary))
                });
            let get = |k: &str| point.iter().find(|(pk, _)| *pk == k).map(|(_, v)| v.clone());
            let mut row = SweepRow {
                label: label.clone(),
                strategy: get("mesh.strategy")
                    .or_else(|| base.get("mesh.strategy").map(str::to_string))
                    .unwrap_or("D4".into()),
                n: get("mesh.n").or_else(|| base.get("mesh.n").map(str::to_string)).and_then(|v| v.parse().ok()),
                m: get("mesh.m").or_else(|| base.get("mesh.m").map(str::to_string)).and_then(|v| v.parse().ok()),
                d: get("mesh.d").or_else(|| base.get("mesh.d").map(str::to_string)).and_then(|v| v.parse().ok()),
                al: None,
                max_l2: None,
                max_s_rel_err: None,
                termination: String::new(),
                error: None,
            };
            row.strategy = row.strategy.to_ascii_uppercase();
            match outcome {
                Ok((cfg, s)) => {
                    row.n = Some(cfg.mesh.interval_count());
                    row.m = Some(cfg.mesh.coarse_count());
                    row.d = cfg.mesh.refined_count();
                    row.al = s.al;
                    row.max_l2 = s.max_l2;
                    row.max_s_rel_err = s.max_interface_error;
                    row.termination = match s.termination {
                        frontmol_core::solve::TraceTermination::Completed => "completed".into(),
                        frontmol_core::solve::TraceTermination::Extinct { .. } => "extinct".into(),
                    };
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv());
    }
    out
}

/// Smallest `AL` for each `(strategy, N)` over the other settings.
pub fn argmin_csv(rows: &[SweepRow]) -> String {
    let mut best: BTreeMap<(String, usize), &SweepRow> = BTreeMap::new();
    for r in rows {
        let (Some(n), Some(al)) = (r.n, r.al) else { continue };
        let entry = best.entry((r.strategy.clone(), n)).or_insert(r);
        if al < entry.al.unwrap_or(f64::INFINITY) {
            *entry = r;
        }
    }
    let mut out = format!("{ARGMIN_HEADER}\n");
    for ((strategy, n), r) in best {
        let opt = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        out.push_str(&format!("{strategy},{n},{},{},{}\n", opt(r.m), opt(r.d), num(r.al.unwrap_or(f64::NAN))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tied_axis() {
        let g = parse_grid("N=M=10,20,50").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[1], vec![("mesh.n", "20".to_string()), ("mesh.m", "20".to_string())]);
        assert_eq!(label(&g[1]), "N20_M20");
    }

    #[test]
    fn product_and_ranges() {
        let g = parse_grid("N=30; M=3..6; strategy=d4").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0][1], ("mesh.m", "3".to_string()));
        assert_eq!(g[3][1], ("mesh.m", "6".to_string()));
        assert_eq!(g[0][2], ("mesh.strategy", "D4".to_string()));
        assert_eq!(parse_grid("strategy=D1,D2;M=8;d=3,4").unwrap().len(), 4);
    }

    #[test]
    fn bad_grids() {
        for spec in ["", "N", "Q=3", "N=x", "N=5..2", "strategy=D9", "N=3;N=4", "N=M=3;M=4"] {
            assert!(parse_grid(spec).is_err(), "{spec}");
        }
    }

    #[test]
    fn argmin_picks_smallest() {
        let row = |m: usize, al: Option<f64>| SweepRow {
            label: format!("M{m}"),
            strategy: "D4".into(),
            n: Some(30),
            m: Some(m),
            d: None,
            al,
            max_l2: al,
            max_s_rel_err: None,
            termination: "completed".into(),
            error: if al.is_none() { Some("boom".into()) } else { None },
        };
        let rows = vec![row(3, Some(2e-4)), row(5, Some(6.7e-5)), row(7, None), row(9, Some(1e-4))];
        let table = argmin_csv(&rows);
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().starts_with("D4,30,5,,6.7"));
        assert!(sweep_csv(&rows).contains("error,\"boom\""));
    }
}
