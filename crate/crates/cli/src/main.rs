//! Command-line driver for nested-environment decoherence experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric/runtime failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load, Overrides, Resolved};

#[derive(Parser)]
#[command(
    name = "nestenv",
    version,
    about = "Decoherence of a dephasing qubit coupled to nested random-matrix environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Parser)]
struct RunArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured worker count (0 = default).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Gamma = 0 fidelity-amplitude baseline plus spline cache.
    Fidelity(RunArgs),
    /// Damped coherence traces, one CSV per configured rate.
    Simulate(RunArgs),
    /// Simulation vs linear-response theory vs ELR, with fitted rates.
    Compare(RunArgs),
    /// Aggregate fitted rates across scenarios and fit the saturation law.
    Saturation(RunArgs),
    /// Quick built-in numerical checks.
    Selftest,
}

fn resolve_stage(args: &RunArgs, command: &str) -> Result<Resolved, ExitCode> {
    let overrides = Overrides {
        seed: args.seed,
        workers: args.workers,
        out: args.out.as_deref(),
    };
    let resolved = match load(&args.config, overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return Err(ExitCode::from(2));
        }
    };
    // command-specific configuration requirements
    let check = match command {
        "simulate" | "compare" => {
            if resolved.gammas.is_empty() {
                Some("the damping-rate list is empty")
            } else {
                None
            }
        }
        "saturation" => match &resolved.config.saturation {
            None => Some("a [saturation] section with configs is required"),
            Some(s) if s.configs.is_empty() => Some("saturation.configs is empty"),
            _ => None,
        },
        _ => None,
    };
    if let Some(msg) = check {
        eprintln!("config error: {msg}");
        return Err(ExitCode::from(2));
    }
    Ok(resolved)
}

fn run_stage(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Fidelity(args) => match resolve_stage(&args, "fidelity") {
            Ok(r) => run_stage(commands::cmd_fidelity(&r)),
            Err(code) => code,
        },
        Command::Simulate(args) => match resolve_stage(&args, "simulate") {
            Ok(r) => run_stage(commands::cmd_simulate(&r)),
            Err(code) => code,
        },
        Command::Compare(args) => match resolve_stage(&args, "compare") {
            Ok(r) => run_stage(commands::cmd_compare(&r).map(|_| ())),
            Err(code) => code,
        },
        Command::Saturation(args) => match resolve_stage(&args, "saturation") {
            Ok(r) => run_stage(commands::cmd_saturation(&r)),
            Err(code) => code,
        },
        Command::Selftest => run_stage(commands::cmd_selftest()),
    }
}
