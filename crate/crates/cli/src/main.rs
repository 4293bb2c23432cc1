//! `headline-cnn`: synthesize corpora, train the headline CNN, evaluate it and
//! run trading simulations on its predictions.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use headline_cnn::embeddings::EmbeddingMode;
use headline_cnn::network::Head;

#[derive(Debug, Parser)]
#[command(
    name = "headline-cnn",
    version,
    about = "Headline CNN for next-day stock movement and trading simulation"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides `training.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Run grid-search cells and sweep points concurrently.
    #[arg(long, global = true)]
    pub parallel: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic headline CSV and price CSV.
    Synth(SynthArgs),
    /// Split, label and encode the corpus; write the vocabulary and split.
    Prepare,
    /// Train a model (optionally after a grid search) and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on the test split.
    Evaluate(CheckpointArg),
    /// Simulate the threshold strategy on test-day predictions.
    Backtest(BacktestArgs),
    /// Write the threshold sweep table.
    Sweep(BacktestArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Nearest vocabulary tokens by embedding cosine similarity.
    Neighbors(NeighborsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub assets: usize,
    #[arg(long, default_value_t = 300)]
    pub days: usize,
    #[arg(long, default_value_t = 5)]
    pub per_day: usize,
    /// Probability that a day's phrase family predicts the next-day move.
    #[arg(long, default_value_t = 1.0)]
    pub signal: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Embedding mode; overrides `embedding.mode`.
    #[arg(long)]
    pub mode: Option<EmbeddingMode>,
    /// Run the configured grid search first and train its best cell.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct CheckpointArg {
    /// Defaults to `<out-dir>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    /// Use a predictions CSV (`asset,date,p0[,p1,p2]`) instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    pub predictions: Option<PathBuf>,
    /// Strategy head; must match the predictions.
    #[arg(long)]
    pub strategy: Option<Head>,
    /// Buy threshold; overrides `strategy.threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also write the threshold sweep.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Added to every analytic gradient; a nonzero value must fail.
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub perturb: f64,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[command(flatten)]
    pub checkpoint: CheckpointArg,
    #[arg(long)]
    pub token: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
