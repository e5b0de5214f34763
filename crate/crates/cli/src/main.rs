//! `lgame`: solve, check and simulate lattice approximations of differential games.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or
//! runtime failure.

mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "lgame", version, about = "Lattice Markov-chain approximation of zero-sum differential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the upper and lower lattice values and write CSV slices.
    Solve(CommonArgs),
    /// Tabulate errors against a reference over the h (and sigma) lists.
    Converge(CommonArgs),
    /// Run the extremal-shift strategy against the adversary panel.
    Simulate(CommonArgs),
    /// Print the error constants.
    Bounds(CommonArgs),
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }

    pub fn numeric(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 3, error: error.into() }
    }
}

impl From<lattice_game::Error> for Failure {
    fn from(e: lattice_game::Error) -> Self {
        if e.is_usage() {
            Failure::usage(e)
        } else {
            Failure::numeric(e)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let args = match &cli.command {
        Command::Solve(a) | Command::Converge(a) | Command::Simulate(a) | Command::Bounds(a) => a,
    };
    let cfg = RunConfig::resolve(args)?;
    let work = || match &cli.command {
        Command::Solve(_) => commands::solve(&cfg),
        Command::Converge(_) => commands::converge(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Bounds(_) => commands::bounds(&cfg),
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(Failure::numeric)?
            .install(work),
        None => work(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
