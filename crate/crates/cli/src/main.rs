//! `ter-tsf`: ingest series+text datasets, inspect prompts, generate and
//! score candidate texts, build preference pairs, train the toy generator
//! and the forecaster, and drive the full refinement pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ter_tsf_core::Error;

#[derive(Parser, Debug)]
#[command(name = "ter-tsf", version, about = "Reward-guided text reinforcement for multimodal time series forecasting")]
struct Cli {
    /// TOML config file mirroring the pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Mode override: tsf_only, tsf_text, tsf_ter, tsf_ter_r1, tsf_ter_r12.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Generation backend override: mock, toy, remote.
    #[arg(long, global = true)]
    backend: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate and summarize a series CSV and texts JSONL.
    Ingest {
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long)]
        domain: Option<String>,
        /// daily, weekly, or monthly.
        #[arg(long)]
        frequency: Option<String>,
    },
    /// Render the generator prompt for one window.
    Serialize {
        /// Window start index over the normalized series; defaults to the
        /// last full window.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        lookback: Option<usize>,
    },
    /// Generate candidate reinforced texts for one window.
    Generate {
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        lookback: Option<usize>,
        /// Candidates to request; defaults to the configured k.
        #[arg(long)]
        k: Option<usize>,
        /// Toy policy checkpoint to generate with.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Score candidate texts (relevance reward, plus accuracy when a
    /// forecaster checkpoint is given).
    Score {
        /// JSONL of candidates: objects with a `body` field.
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        /// Forecaster checkpoint for the accuracy reward.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Build preference pairs from scored candidates.
    Pair {
        /// JSONL produced by `score`.
        #[arg(long)]
        scored: PathBuf,
    },
    /// Train a forecaster on the train/val splits and save a checkpoint.
    TrainForecaster {
        /// Forecast horizon; defaults to the first configured horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Preference-train a toy policy on a pairs file.
    TrainDpo {
        #[arg(long)]
        pairs: PathBuf,
        /// Starting policy checkpoint; a fresh seeded policy otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Run the refinement loop and export the preference pairs.
    ExportPairs,
    /// Run the full pipeline and write reports, checkpoints, and pairs.
    Run,
    /// Evaluate a forecaster checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Toy policy checkpoint for reinforced-text evaluation.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Re-emit the CSV projections of a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

impl Cli {
    fn effective_config(&self) -> Result<config::FileConfig, Error> {
        let mut file = match &self.config {
            Some(path) => config::FileConfig::load(path)?,
            None => config::FileConfig::default(),
        };
        if let Some(seed) = self.seed {
            file.pipeline.seed = seed;
        }
        if let Some(mode) = &self.mode {
            file.pipeline.mode = mode.parse()?;
        }
        if let Some(backend) = &self.backend {
            file.pipeline.backend = backend.parse()?;
        }
        Ok(file)
    }
}
