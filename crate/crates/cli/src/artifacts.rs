//! CSV artifacts: fixed header per file, 17 significant digits, atomic writes.

use std::fs;
use std::io;
use std::path::Path;

use frontmol_core::benchmarks::AnalyticSolution;
use frontmol_core::meshing::MeshSpec;
use frontmol_core::metrics::ErrorReport;
use frontmol_core::solve::{Section, SolutionTrace, TraceTermination};
use frontmol_core::stiff_ode::IntegratorStats;

pub const SOLUTION_HEADER: &str = "section,t,s,i,y,x,u,w";
pub const INTERFACE_HEADER: &str = "t,s";
pub const ERROR_HEADER: &str = "t,l1_rel,l2_rel,s_num,s_analytic,s_rel_err";

/// Round-trip formatting: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Stored sections `1..=r`; the initial level is not included.
pub fn solution_csv(trace: &SolutionTrace) -> String {
    let mut out = format!("{SOLUTION_HEADER}\n");
    for (j, sec) in trace.sections.iter().enumerate() {
        for (i, y) in trace.y.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                j + 1,
                num(sec.t),
                num(sec.s),
                i,
                num(*y),
                num(sec.x[i]),
                num(sec.u[i]),
                num(sec.w[i])
            ));
        }
    }
    out
}

pub fn interface_csv(trace: &SolutionTrace) -> String {
    let mut out = format!("{INTERFACE_HEADER}\n");
    for sec in std::iter::once(&trace.initial).chain(&trace.sections) {
        out.push_str(&format!("{},{}\n", num(sec.t), num(sec.s)));
    }
    out
}

/// Per-section relative errors with the interface error and an `AL` footer.
pub fn error_csv(trace: &SolutionTrace, report: &ErrorReport, analytic: &dyn AnalyticSolution) -> String {
    let mut out = format!("{ERROR_HEADER}\n");
    for (k, t) in report.times.iter().enumerate() {
        let s_num = trace.section_at(*t).map_or(f64::NAN, |s| s.s);
        let s_an = analytic.interface(*t);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            num(*t),
            num(report.l1_rel[k]),
            num(report.l2_rel[k]),
            num(s_num),
            num(s_an),
            num((s_num - s_an).abs() / s_an)
        ));
    }
    out.push_str(&format!("# AL={},r={}\n", num(report.al), report.r));
    out
}

pub fn stats_csv(trace: &SolutionTrace, mesh: &MeshSpec) -> String {
    let IntegratorStats { steps_accepted, steps_rejected, rhs_evals, jacobian_evals, newton_iters, clamp_events } =
        trace.stats;
    let mut rows: Vec<(&str, String)> = vec![
        ("variant", trace.variant.to_string()),
        ("exponent", num(trace.exponent)),
        ("mesh", mesh.label()),
        ("intervals", mesh.interval_count().to_string()),
        ("coarse", mesh.coarse_count().to_string()),
        ("sections", trace.sections.len().to_string()),
    ];
    match trace.termination {
        TraceTermination::Completed => rows.push(("termination", "completed".into())),
        TraceTermination::Extinct { t_before, t_after } => {
            rows.push(("termination", "extinct".into()));
            rows.push(("extinct_after", num(t_before)));
            rows.push(("extinct_before", num(t_after)));
        }
    }
    rows.extend([
        ("steps_accepted", steps_accepted.to_string()),
        ("steps_rejected", steps_rejected.to_string()),
        ("rhs_evals", rhs_evals.to_string()),
        ("jacobian_evals", jacobian_evals.to_string()),
        ("newton_iters", newton_iters.to_string()),
        ("clamp_events", clamp_events.to_string()),
    ]);
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

fn malformed(what: &str, line: usize, msg: impl std::fmt::Display) -> String {
    format!("{what} line {line}: {msg}")
}

/// Rebuilds a trace from `solution.csv`. The first stored section doubles as
/// the initial level; integrator statistics are not restored.
pub fn read_solution(text: &str) -> Result<SolutionTrace, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SOLUTION_HEADER => {}
        _ => return Err(format!("solution.csv must start with `{SOLUTION_HEADER}`")),
    }
    let mut y: Vec<f64> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut current: Option<usize> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(malformed("solution.csv", line_no, format!("expected 8 fields, got {}", fields.len())));
        }
        let f = |k: usize| -> Result<f64, String> {
            fields[k]
                .trim()
                .parse()
                .map_err(|_| malformed("solution.csv", line_no, format!("bad number `{}`", fields[k])))
        };
        let section: usize = fields[0].parse().map_err(|_| malformed("solution.csv", line_no, "bad section index"))?;
        let i: usize = fields[3].parse().map_err(|_| malformed("solution.csv", line_no, "bad node index"))?;
        let (t, s) = (f(1)?, f(2)?);
        if current != Some(section) {
            if let Some(prev) = sections.last() {
                if !(t > prev.t) {
                    return Err(malformed("solution.csv", line_no, "section times must increase"));
                }
            }
            current = Some(section);
            sections.push(Section { t, s, x: Vec::new(), u: Vec::new(), w: Vec::new() });
        }
        let first = sections.len() == 1;
        let sec = sections.last_mut().expect("pushed above");
        if i != sec.x.len() {
            return Err(malformed("solution.csv", line_no, format!("expected node {}, got {i}", sec.x.len())));
        }
        if first {
            y.push(f(4)?);
        } else if y.get(i) != Some(&f(4)?) {
            return Err(malformed("solution.csv", line_no, "grid differs between sections"));
        }
        sec.x.push(f(5)?);
        sec.u.push(f(6)?);
        sec.w.push(f(7)?);
    }
    if sections.is_empty() {
        return Err("solution.csv holds no sections".into());
    }
    if let Some(short) = sections.iter().find(|s| s.x.len() != y.len()) {
        return Err(format!("section at t = {} has {} nodes, expected {}", short.t, short.x.len(), y.len()));
    }
    Ok(SolutionTrace {
        variant: "restored",
        exponent: f64::NAN,
        y,
        initial: sections[0].clone(),
        sections,
        stats: IntegratorStats::default(),
        termination: TraceTermination::Completed,
    })
}

/// Reads the termination record from `stats.csv`.
pub fn read_termination(text: &str) -> Result<TraceTermination, String> {
    let value = |key: &str| {
        text.lines().filter_map(|l| l.split_once(',')).find(|(k, _)| *k == key).map(|(_, v)| v.trim().to_string())
    };
    let number = |key: &str| -> Result<f64, String> {
        value(key).and_then(|v| v.parse().ok()).ok_or_else(|| format!("stats.csv: missing or bad `{key}`"))
    };
    match value("termination").as_deref() {
        Some("completed") => Ok(TraceTermination::Completed),
        Some("extinct") => {
            Ok(TraceTermination::Extinct { t_before: number("extinct_after")?, t_after: number("extinct_before")? })
        }
        _ => Err("stats.csv: missing termination record".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_trace() -> SolutionTrace {
        let y = vec![0.0, 0.5, 1.0];
        let sec = |t: f64, s: f64| Section {
            t,
            s,
            x: y.iter().map(|v| v * s).collect(),
            u: vec![0.3, 0.1 + t, 0.0],
            w: vec![0.3, 0.1 + t, 0.0],
        };
        SolutionTrace {
            variant: "power_law",
            exponent: 1.0,
            y: y.clone(),
            initial: sec(0.0, 1.0),
            sections: vec![sec(0.1, 1.0 / 3.0), sec(0.2, 2.0f64.sqrt())],
            stats: IntegratorStats::default(),
            termination: TraceTermination::Extinct { t_before: 0.2, t_after: 0.25 },
        }
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let text = num(v);
            assert_eq!(text.parse::<f64>().unwrap(), v);
            let digits = text.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn solution_round_trips() {
        let trace = toy_trace();
        let back = read_solution(&solution_csv(&trace)).unwrap();
        assert_eq!(back.y, trace.y);
        assert_eq!(back.sections, trace.sections);
        assert_eq!(solution_csv(&back), solution_csv(&trace));
    }

    #[test]
    fn termination_round_trips() {
        let trace = toy_trace();
        let stats = stats_csv(&trace, &MeshSpec::Geometric { n: 2, m: 2 });
        assert_eq!(read_termination(&stats).unwrap(), trace.termination);
        assert!(read_termination("key,value\n").is_err());
    }

    #[test]
    fn malformed_solution_rejected() {
        assert!(read_solution("t,s\n").is_err());
        assert!(read_solution(&format!("{SOLUTION_HEADER}\n")).is_err());
        let bad = format!("{SOLUTION_HEADER}\n1,0.1,1,0,0,0,x,0\n");
        assert!(read_solution(&bad).unwrap_err().contains("line 2"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, "one\n").unwrap();
        write_atomic(&p, "two\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
