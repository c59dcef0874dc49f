//! Command-line front end: parses arguments, loads the run config and
//! dispatches to the pipeline stages. All real work lives in the library.

use cgae::config::RunConfig;
use cgae::pipeline;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cgae",
    about = "Probabilistic spatio-temporal forecasting on site graphs",
    version
)]
struct Cli {
    /// Run configuration file (flat `key = value` with [sections]).
    #[arg(long, global = true, default_value = "cgae.conf")]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic site data and write it to paths.data.
    Synth,
    /// Select input lags by mutual information on the training split.
    SelectLags,
    /// Build the site graph and write its edge list.
    BuildGraph,
    /// Train one checkpoint per configured horizon.
    Train {
        /// Override training.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Dump the ensemble and quantiles for one test instance.
    Forecast {
        /// Forecast horizon in 30-minute steps.
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Test instance index (chronological).
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Score the model and the persistence baseline; write report tables.
    Evaluate,
}

fn run() -> cgae::Result<String> {
    let cli = Cli::parse();
    let mut config = if cli.config.exists() {
        RunConfig::load(&cli.config)?
    } else if matches!(cli.command, Command::Synth) && cli.config == PathBuf::from("cgae.conf") {
        // Synth with no config file runs on defaults.
        RunConfig::default()
    } else {
        return Err(cgae::Error::MissingArtifact {
            path: cli.config.display().to_string(),
            hint: "pass --config <file>".to_string(),
        });
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;

    let summary = match cli.command {
        Command::Synth => pipeline::synth_stage(&config)?,
        Command::SelectLags => pipeline::select_lags_stage(&config)?,
        Command::BuildGraph => pipeline::build_graph_stage(&config)?,
        Command::Train { epochs } => pipeline::train_stage(&config, epochs)?,
        Command::Forecast { horizon, index } => {
            pipeline::forecast_stage(&config, horizon, index)?
        }
        Command::Evaluate => pipeline::evaluate_stage(&config)?,
    };
    Ok(summary.render())
}

fn main() -> ExitCode {
    match run() {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
