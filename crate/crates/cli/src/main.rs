use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;

#[derive(Debug, Parser)]
#[command(name = "etstl", version, about = "Event-triggered STL controller and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write CSV traces plus metrics.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's `out` entry.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Print the maximal smoothed robustness of every task in a formula file.
    Optimize {
        #[arg(long)]
        formula: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Evaluate a formula on a trajectory.csv produced by `run`.
    Monitor {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        formula: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        at: f64,
    },
    /// Run the bundled three-robot scenario and check it against the targets.
    ReproducePaper {
        #[arg(long)]
        out: PathBuf,
        /// Replace the bundled seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            dt,
        } => commands::run(&scenario, out, seed, dt),
        Command::Optimize { formula, eta } => commands::optimize(&formula, eta),
        Command::Monitor {
            trajectory,
            formula,
            at,
        } => commands::monitor(&trajectory, &formula, at),
        Command::ReproducePaper { out, seed } => commands::reproduce_paper(&out, seed),
    };
    match res {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code().into()
        }
    }
}
