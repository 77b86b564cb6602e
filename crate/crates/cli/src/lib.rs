//! `hsched`: generate corpora, train the two agents, evaluate schedulers and
//! summarise the results.

pub mod commands;
pub mod config;
pub mod defaults;
pub mod error;
pub mod manifest;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "hsched", version, about = "Two-tier reinforcement-learning queue scheduler")]
pub struct Cli {
    /// JSON config file (or a run manifest to replay).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative output paths are written under.
    #[arg(long, global = true, env = "HSCHED_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for training restarts and evaluation (0 = all cores).
    #[arg(long, global = true, env = "HSCHED_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    GenCorpus(GenCorpusArgs),
    /// Train the per-item agent.
    TrainInternal(TrainInternalArgs),
    /// Train the queue-level agent against a frozen per-item agent.
    TrainOuter(TrainOuterArgs),
    /// Compare schedulers on static queues or arrival streams.
    Eval(EvalArgs),
    /// Render evaluation summaries as a Markdown report.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenCorpus(_) => "gen-corpus",
            Command::TrainInternal(_) => "train-internal",
            Command::TrainOuter(_) => "train-outer",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub detectors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainInternalArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Reward preset: exp1 .. exp5.
    #[arg(long)]
    pub reward: Option<String>,
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent training runs; the best by greedy training return is kept.
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub entropy: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub reward_scale: Option<f64>,
    /// Fraction of the corpus held out for evaluation.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch metrics CSV (default: next to the checkpoint).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Directory for one checkpoint per restart and epoch.
    #[arg(long)]
    pub epoch_checkpoints: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOuterArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Internal checkpoint; only read.
    #[arg(long)]
    pub internal: Option<PathBuf>,
    /// Window size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Passes over the training split, in episodes of one queue each.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Total episodes; overrides --epochs.
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub entropy: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub reward_scale: Option<f64>,
    /// Held-out queues scored after every epoch.
    #[arg(long)]
    pub eval_queues: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub internal: Option<PathBuf>,
    /// Outer checkpoint; needed for MERLIN.
    #[arg(long)]
    pub outer: Option<PathBuf>,
    /// static or dynamic.
    #[arg(long)]
    pub mode: Option<String>,
    /// Queue sizes, e.g. `10` or `10,20,...,100`.
    #[arg(long)]
    pub sizes: Option<String>,
    /// `all` or a comma-separated list of scheduler names.
    #[arg(long)]
    pub schedulers: Option<String>,
    /// Replications per size (default 500 for size 10, 100 otherwise).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `all` or a comma-separated list of overload, balanced, underload.
    #[arg(long)]
    pub regime: Option<String>,
    /// batch or rate.
    #[arg(long)]
    pub arrivals: Option<String>,
    #[arg(long)]
    pub stream_items: Option<usize>,
    #[arg(long)]
    pub interval: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub initial_items: Option<usize>,
    /// Directory for the CSV and JSON outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `eval`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Markdown file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line; `argv` is recorded in the run manifest.
pub fn execute(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    commands::dispatch(cli, argv)
}
