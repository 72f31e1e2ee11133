//! `lqrflow`: command-line access to the Bellman-error LQR toolkit.
//!
//! Exit codes: 0 success, 2 input error, 3 domain or precondition error,
//! 4 numerical failure.

mod commands;
mod error;
mod format;
mod instance;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lqrflow", version, about = "Continuous-time LQR by Bellman-error gradient flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Riccati equation with the Kleinman iteration
    Care(commands::CareArgs),
    /// Evaluate an objective and its gradient at a gain
    Eval(commands::EvalArgs),
    /// Integrate a gradient flow and write the trajectory CSV
    Flow(commands::FlowArgs),
    /// Evaluate an objective on a 2-D gain grid
    Grid(commands::GridArgs),
    /// Run the random-instance convergence study
    Bench(commands::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Care(a) => commands::care(a),
        Command::Eval(a) => commands::eval(a),
        Command::Flow(a) => commands::flow(a),
        Command::Grid(a) => commands::grid(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.stdout);
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    let _ = writeln!(std::io::stderr(), "{}", format::to_json(e));
    ExitCode::from(e.code as u8)
}
