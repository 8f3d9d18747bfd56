#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CoeffKind, Invocation};
use crate::error::{CliError, CliResult};

/// Spectral-Galerkin experiments for the stochastic heat equation with
/// multiplicative correlated noise.
#[derive(Parser)]
#[command(name = "she", version, about)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override a config value, e.g. --set mc.paths=5000 (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo mean-square curve.
    Simulate { config: PathBuf },
    /// Stability conditions and margins.
    Check { config: PathBuf },
    /// (beta1, beta0) stability region sweep.
    Region { config: PathBuf },
    /// Coupled-noise truncation error study.
    Converge { config: PathBuf },
    /// Dump coefficient tables.
    Coeffs {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "tensor")]
        what: CoeffKind,
    },
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<String> {
    configure_threads(cli.threads)?;
    let (name, path) = match &cli.command {
        Command::Simulate { config } => ("simulate", config),
        Command::Check { config } => ("check", config),
        Command::Region { config } => ("region", config),
        Command::Converge { config } => ("converge", config),
        Command::Coeffs { config, .. } => ("coeffs", config),
    };
    let cfg = config::load(path, &cli.overrides)?;
    let inv = Invocation {
        command: name,
        config_path: path,
        config: &cfg,
        overrides: &cli.overrides,
    };
    match cli.command {
        Command::Simulate { .. } => commands::simulate(&inv),
        Command::Check { .. } => commands::check(&inv),
        Command::Region { .. } => commands::region(&inv),
        Command::Converge { .. } => commands::converge(&inv),
        Command::Coeffs { what, .. } => commands::coeffs(&inv, what),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
