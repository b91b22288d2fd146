//! `tlforest`: run dataset cleaning, training, prediction and evaluation
//! from a JSON experiment config.
//!
//! Exit codes: 0 on success, 2 when the request is invalid (nothing has been
//! written), 1 when the work itself fails. `TLFOREST_THREADS` caps the worker
//! pool; results do not depend on it.

mod commands;
mod config;
mod experiment;
mod fail;
mod recipe;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::fail::{Failure, Invalid};

#[derive(Parser)]
#[command(name = "tlforest", version, about = "Multi-task random forests with transfer learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and clean the data, writing the result and a step-by-step report.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `outputs.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured architectures on the cleaned data.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this architecture.
        #[arg(long)]
        arch: Option<String>,
        /// Replaces `params.default.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict every output of a trained model for the rows of a CSV file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Skip the jackknife standard errors.
        #[arg(long)]
        no_uncertainty: bool,
    },
    /// Run the configured cross-validation, holdout or learning curve.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Replaces `evaluation.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset and its schema.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a config against its data without writing anything.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("TLFOREST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::invalid(format!("TLFOREST_THREADS={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .runtime("starting the worker pool")
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    match cli.command {
        Command::Ingest { config, out } => commands::ingest(&config, out.as_deref()),
        Command::Train {
            config,
            arch,
            seed,
            out,
        } => commands::train(&config, arch.as_deref(), seed, out.as_deref()),
        Command::Predict {
            model,
            input,
            output,
            no_uncertainty,
        } => commands::predict(&model, &input, output.as_deref(), !no_uncertainty),
        Command::Evaluate { config, seed, out } => commands::evaluate_cmd(&config, seed, out.as_deref()),
        Command::Synth { config, out, seed } => commands::synth(&config, &out, seed),
        Command::Check { config } => commands::check(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let kind = match f {
                Failure::Invalid(_) => "invalid request",
                Failure::Runtime(_) => "error",
            };
            eprintln!("{kind}: {:#}", f.error());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
