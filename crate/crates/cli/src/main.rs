//! `dyngame`: solve, simulate and benchmark driving games from scenario files.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dyngame", version, about = "Generalized Nash equilibrium solver for driving games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario from its nominal initial state.
    Solve(Common),
    /// Receding-horizon closed-loop simulation.
    Mpc(Common),
    /// Solve `--n` randomly perturbed copies of a scenario.
    Montecarlo(Common),
    /// Time `--n` cold-start solves of each scenario.
    Bench(Common),
    /// Solve, then probe the solution with random unilateral deviations.
    Nashcheck(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario JSON file; `bench` accepts it more than once.
    #[arg(long, required = true)]
    pub scenario: Vec<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples (montecarlo), repetitions (bench) or directions per player (nashcheck).
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
    /// Option override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Outcome of a workflow that ran to completion.
pub enum Outcome {
    Success,
    NotConverged,
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
    let result = match cli.command {
        Command::Solve(c) => commands::solve(&c),
        Command::Mpc(c) => commands::mpc(&c),
        Command::Montecarlo(c) => commands::montecarlo(&c),
        Command::Bench(c) => commands::bench(&c),
        Command::Nashcheck(c) => commands::nashcheck(&c),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
