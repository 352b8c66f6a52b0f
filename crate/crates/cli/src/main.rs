//! `bitlsh`: batch experiments with the bit-sampling LSH index.
//!
//! Exit codes: 0 on success, 1 on invalid input or flags, 2 when a
//! statistical check fails.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{BenchArgs, BuildArgs, GenArgs, QueryArgs, VerifyArgs};

#[derive(Parser)]
#[command(
    name = "bitlsh",
    version,
    about = "Hamming-space near-neighbor index built on bit sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted dataset (binary) plus a one-line query file (text).
    Gen(GenArgs),
    /// Build an index over a dataset and write its snapshot.
    Build(BuildArgs),
    /// Answer queries against a snapshot.
    Query(QueryArgs),
    /// Check a collision-probability claim by Monte Carlo simulation.
    Verify(VerifyArgs),
    /// Measure query cost over growing prefixes of a dataset.
    Bench(BenchArgs),
}

pub enum Outcome {
    Ok,
    CheckFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Build(args) => commands::build(args),
        Command::Query(args) => commands::query(args),
        Command::Verify(args) => commands::verify(args),
        Command::Bench(args) => commands::bench(args),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
