//! `fwiprune`: compression workflows for sequential convolutional FWI
//! surrogates. Subcommands: synth, train, compress, cost, bench, eval, sweep.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fwiprune", version, about = "Structured filter pruning toolkit for FWI surrogate CNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with train/val/test splits
    Synth(SynthArgs),
    /// Train a network from scratch on a dataset
    Train(TrainArgs),
    /// Run the prune/finetune/retrain pipeline on a trained checkpoint
    Compress(CompressArgs),
    /// Parameter and FLOPs accounting for a checkpoint
    Cost(CostArgs),
    /// Latency benchmark of a checkpoint
    Bench(BenchArgs),
    /// Quality metrics of a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Compress across a grid of ratios and iteration counts
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Synthesis config (JSON); flags below override file values
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the sample count from the config
    #[arg(long)]
    pub count: Option<usize>,
    /// Override the generator seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Architecture: a JSON config path, or the presets "tiny" / "default"
    #[arg(long)]
    pub arch: String,
    /// Dataset directory produced by `synth`
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint path; the loss curve and manifest land next to it
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Target cumulative pruning ratio R in [0, 1)
    #[arg(long)]
    pub ratio: f64,
    /// Number of prune+finetune iterations N
    #[arg(long, default_value_t = 1)]
    pub iters: usize,
    /// Loss threshold T gating stage 3 (defaults to 1.1x baseline val loss)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Total finetuning epoch budget (split as budget/N per iteration)
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CostArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Baseline checkpoint; adds reduction percentages
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Also write cost.json / cost.csv / manifest.json into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Batch size of the benchmark input
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which split of the dataset directory to evaluate
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated pruning ratios, e.g. 0.1,0.5,0.9
    #[arg(long, value_delimiter = ',')]
    pub ratios: Vec<f64>,
    /// Comma-separated iteration counts, e.g. 1,3,5
    #[arg(long, value_delimiter = ',')]
    pub iters: Vec<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 120)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Benchmark runs per cell (sequential sweeps only)
    #[arg(long, default_value_t = 20)]
    pub bench_runs: usize,
    /// Run cells on worker threads; disables in-cell latency benchmarking
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(&args),
        Command::Train(args) => commands::train::run(&args),
        Command::Compress(args) => commands::compress::run(&args),
        Command::Cost(args) => commands::cost::run(&args),
        Command::Bench(args) => commands::bench::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Sweep(args) => commands::sweep::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
