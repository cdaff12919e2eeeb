//! `affinelp` — configuration-driven experiment harness for the data-driven
//! LP control pipeline: generate systems and trajectories, certify
//! excitation, synthesize Bellman-inequality constraints, solve the LPs,
//! and compare everything against the closed-form oracles.
//!
//! Exit codes: 0 success, 1 method-level negative (rank failure, residual
//! failure, unbounded program), 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "affinelp", version, about)]
struct Cli {
    /// Experiment configuration file (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for generated files and reports
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the configuration seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the relative rank tolerance
    #[arg(long, global = true)]
    tol_rank: Option<f64>,

    /// Override the LP feasibility tolerance used in reports
    #[arg(long, global = true)]
    tol_lp: Option<f64>,

    /// Suppress progress output
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate system.json, cost.json and a simulated dataset
    Gen,
    /// Certify persistency of excitation and probe the dataset geometry
    Pe {
        /// Excitation order to test (defaults to n + horizon + 1)
        #[arg(long)]
        order: Option<usize>,
    },
    /// Synthesize Bellman-inequality constraint rows from the dataset
    Synth,
    /// Solve the relaxed Q-LP and extract the policy
    Solve,
    /// Run the closed-form oracle suite on random instances
    Verify,
    /// Aggregate prior outputs into report.json and report.csv
    Report,
}

/// Method-level pass/fail distinct from usage errors.
pub enum Outcome {
    Pass,
    Fail(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config is required");
            return ExitCode::from(2);
        }
    };
    let mut config = match ExperimentConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(tol) = cli.tol_rank {
        config.tolerances.rank = tol;
    }
    if let Some(tol) = cli.tol_lp {
        config.tolerances.lp = tol;
    }

    let ctx = commands::Context {
        config,
        out: cli.out.clone(),
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Gen => commands::gen::run(&ctx),
        Command::Pe { order } => commands::pe::run(&ctx, *order),
        Command::Synth => commands::synth::run(&ctx),
        Command::Solve => commands::solve::run(&ctx),
        Command::Verify => commands::verify::run(&ctx),
        Command::Report => commands::report::run(&ctx),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
