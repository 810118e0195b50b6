use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use homoglab::lab::{self, Config};
use homoglab::Result;

#[derive(Parser)]
#[command(name = "homoglab", version, about = "Periodic homogenization and low-cost control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective tensors A₀ (and B♯, B₀ when a cost tensor is given) as JSON
    Homogenize { config: PathBuf },
    /// Solve the state equation once and emit the nodal solution as CSV
    Solve { config: PathBuf },
    /// Solve an ε-level or limit control problem and emit control and state as CSV
    Control { config: PathBuf },
    /// Run an ε-sweep and emit one CSV row per ε plus the limit row
    Sweep { config: PathBuf },
    /// Solve with measure data and emit the duality report as CSV
    Measure { config: PathBuf },
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let path = match &cli.command {
        Command::Homogenize { config }
        | Command::Solve { config }
        | Command::Control { config }
        | Command::Sweep { config }
        | Command::Measure { config } => config,
    };
    let config = Config::load(path)?;
    let output = config.output.path.as_deref();
    match cli.command {
        Command::Homogenize { .. } => {
            let export = lab::run_homogenize(&config)?;
            emit(output, &(export.to_json() + "\n"))
        }
        Command::Solve { .. } => {
            let (u, report) = lab::run_solve(&config)?;
            eprintln!(
                "iterations={} residual={:.3e} energy={:.12e}",
                report.iterations, report.residual, report.energy
            );
            emit(output, &u.to_csv())
        }
        Command::Control { .. } => {
            let out = lab::run_control(&config)?;
            eprintln!(
                "objective={:.12e} kkt={:.3e} iterations={}",
                out.objective, out.kkt_residual, out.iterations
            );
            emit(output, &out.to_csv())
        }
        Command::Sweep { .. } => {
            let report = lab::run_sweep(&config)?;
            emit(output, &report.to_csv())
        }
        Command::Measure { .. } => {
            let (_, report) = lab::run_measure(&config)?;
            eprintln!("max duality gap {:.3e}", report.max_gap());
            emit(output, &report.to_csv())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
