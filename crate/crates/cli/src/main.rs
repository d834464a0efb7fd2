use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lvcoex_cli::{run, Command, Overrides, RunConfig};

/// Steady states of elliptic Lotka-Volterra competition systems.
#[derive(Debug, Parser)]
#[command(name = "lvcoex", version)]
struct Args {
    /// Spec file (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    command: Command,
    /// Output directory for the report and CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of multi-start solves.
    #[arg(long)]
    starts: Option<usize>,
    /// Residual tolerance of the system solver.
    #[arg(long)]
    tol_res: Option<f64>,
    /// Interior node count per axis, replacing the spec's counts.
    #[arg(long)]
    grid_n: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let config = RunConfig {
        spec: args.spec,
        command: args.command,
        out_dir: args.out,
        overrides: Overrides {
            seed: args.seed,
            starts: args.starts,
            tol_res: args.tol_res,
            grid_n: args.grid_n,
        },
    };
    ExitCode::from(run(&config) as u8)
}
