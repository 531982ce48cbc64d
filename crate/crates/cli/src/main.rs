//! Command-line front end binding training, generation, metrics, flow
//! simulation and inversion into reproducible runs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

mod cmd_flow;
mod cmd_generate;
mod cmd_invert;
mod cmd_metrics;
mod cmd_train;
mod common;
mod config;
mod err;

use clap::{Parser, Subcommand};
use err::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "geogan",
    about = "Training-image based geostatistical simulation and Bayesian inversion with a convolutional GAN",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator/discriminator pair on a training image.
    Train {
        /// Run configuration with a [train] section.
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate realizations from a trained generator checkpoint.
    Generate(cmd_generate::GenerateArgs),
    /// Two-point statistics and facies fractions for an ensemble.
    Metrics(cmd_metrics::MetricsArgs),
    /// Solve steady-state groundwater flow for a facies grid.
    Flow(cmd_flow::FlowArgs),
    /// Invert observed heads for the latent field by MCMC.
    Invert(cmd_invert::InvertArgs),
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = config::load(&config)?;
            cmd_train::run(&cfg)
        }
        Command::Generate(args) => cmd_generate::run(&args),
        Command::Metrics(args) => cmd_metrics::run(&args),
        Command::Flow(args) => cmd_flow::run(&args),
        Command::Invert(args) => cmd_invert::run(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
