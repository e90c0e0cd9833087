//! `specmer` command-line entrypoint.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 remote model error.

mod analyze;
mod error;
mod generate;
mod index;
mod io;
mod setup;
mod speedup;
mod sweep;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "specmer", version, about = "Speculative decoding with k-mer guided draft selection")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or inspect k-mer indices.
    #[command(subcommand)]
    Index(index::IndexCommand),
    /// Generate a sequence library.
    Generate(generate::GenerateOpts),
    /// Score a generated library.
    Analyze(analyze::AnalyzeArgs),
    /// Evaluate the wall-time speedup formulas.
    Speedup(speedup::SpeedupArgs),
    /// Statistical self-checks of the sampler.
    #[command(subcommand)]
    Verify(verify::VerifyCommand),
    /// Run a hyperparameter grid.
    Sweep(sweep::SweepArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Index(c) => index::run(c, cli.json),
        Command::Generate(o) => generate::run(o, cli.json),
        Command::Analyze(a) => analyze::run(a, cli.json),
        Command::Speedup(a) => speedup::run(a, cli.json),
        Command::Verify(c) => verify::run(c, cli.json),
        Command::Sweep(a) => sweep::run(a, cli.json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
