//! `frontmol`: runs free-boundary experiments from flat key-value configs.
//!
//! Artifacts go under `$FRONTMOL_OUT/<output.name>/` (default root `frontmol-out`).
//! Exit codes: 0 success (including runs that end in extinction), 1 user error,
//! 2 solver failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

mod artifacts;
mod config;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frontmol_core::meshing::Mesh;
use frontmol_core::solve::TraceTermination;

use crate::artifacts::write_atomic;
use crate::config::{lookup_oracle, mesh_keys, mesh_spec, ExperimentConfig};
use crate::run::{compare, load_config, output_root, restart_config, run_dir_of, run_into, CliError, RunSummary};

#[derive(Debug, Parser)]
#[command(name = "frontmol", version, about = "Moving-interface solver for degenerate diffusion problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one configuration and write its artifacts.
    Run { config: PathBuf },
    /// Solve a configuration over a grid of mesh settings, e.g. `N=30;M=3..30`.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: String,
    },
    /// Error table of a stored solution against an oracle (stdout unless --out).
    Compare {
        /// `solution.csv` or the run directory holding it.
        solution: PathBuf,
        #[arg(long)]
        oracle: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue a stored run from one of its sections on a new mesh.
    Restart {
        /// Run directory (or any file inside it).
        trace: PathBuf,
        #[arg(long)]
        at: f64,
        /// Mesh spec such as `D4:N=60,M=20` or `D2:M=10,d=4`.
        #[arg(long)]
        mesh: String,
        /// Output name; defaults to `<donor>-restart`.
        #[arg(long)]
        name: Option<String>,
    },
    /// Print the points and derivative weights of a mesh spec.
    Mesh { spec: String },
}

fn report(name: &str, s: &RunSummary) {
    match s.termination {
        TraceTermination::Completed => println!("{name}: completed, {} sections", s.sections),
        TraceTermination::Extinct { t_before, t_after } => {
            println!("{name}: extinct in ({t_before}, {t_after}], {} sections stored", s.sections)
        }
    }
    if let (Some(al), Some(max)) = (s.al, s.max_l2) {
        println!("{name}: AL = {al:.6e}, max L2,rel = {max:.6e}");
    }
    if let Some(e) = s.max_interface_error {
        println!("{name}: max interface error = {e:.6e}");
    }
    println!("{name}: wrote {} ({:.2?})", s.dir.display(), s.elapsed);
}

fn run_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = output_root().join(&cfg.name);
    let summary = run_into(cfg, &dir)?;
    report(&cfg.name, &summary);
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => run_config(&load_config(&config)?),
        Command::Sweep { config, grid } => {
            let cfg = load_config(&config)?;
            let points = sweep::parse_grid(&grid).map_err(CliError::Usage)?;
            let dir = output_root().join(&cfg.name);
            let rows = sweep::sweep(&cfg.raw, &cfg.name, &points, &dir.join("runs"));
            let io = |e| CliError::Io { context: format!("writing sweep tables in {}", dir.display()), source: e };
            write_atomic(&dir.join("sweep.csv"), &sweep::sweep_csv(&rows)).map_err(io)?;
            write_atomic(&dir.join("argmin.csv"), &sweep::argmin_csv(&rows)).map_err(io)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{}: {} runs, {failed} failed; tables in {}", cfg.name, rows.len(), dir.display());
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{}: {}", r.label, r.error.as_deref().unwrap_or_default());
            }
            Ok(())
        }
        Command::Compare { solution, oracle, out } => {
            let analytic = lookup_oracle(&oracle).map_err(CliError::Usage)?;
            let (table, al) = compare(&solution, analytic.as_ref())?;
            match out {
                Some(path) => {
                    write_atomic(&path, &table)
                        .map_err(|e| CliError::Io { context: format!("writing {}", path.display()), source: e })?;
                    println!("AL = {al:.6e}; wrote {}", path.display());
                }
                None => print!("{table}"),
            }
            Ok(())
        }
        Command::Restart { trace, at, mesh, name } => {
            let keys = mesh_keys(&mesh).map_err(CliError::Usage)?;
            let cfg = restart_config(&run_dir_of(&trace), at, &keys, name.as_deref())?;
            run_config(&cfg)
        }
        Command::Mesh { spec } => {
            let mesh = mesh_spec(&spec).and_then(|m| Mesh::build(&m).map_err(|e| e.to_string()));
            print!("{}", mesh.map_err(CliError::Usage)?.dump_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
