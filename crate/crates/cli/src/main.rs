mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Train, run and benchmark the locost state-space encoder-decoder.
///
/// Log verbosity follows the `LOCOST_LOG` environment variable (default `info`).
#[derive(Debug, Parser)]
#[command(name = "locost", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn documents into gap-sentence pseudo-summary pairs.
    Gsg(GsgArgs),
    /// Train on GSG pairs.
    Pretrain(TrainArgs),
    /// Train on source/summary pairs.
    Finetune(TrainArgs),
    /// Greedy-decode summaries with a trained checkpoint.
    Generate(GenerateArgs),
    /// Time forward passes over a range of sequence lengths and fit a complexity class.
    Bench(BenchArgs),
    /// Compare model gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Export one encoder SSM kernel and its decay envelope as CSV.
    KernelViz(KernelVizArgs),
}

#[derive(Debug, Args)]
pub struct GsgArgs {
    /// JSONL with a "text" field per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = locost::data::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with optional "model", "train", "max_source_len" and "max_target_len" entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSONL with "source" and "summary" fields per line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub steps: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from this checkpoint; its sibling vocab.json is reused.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Also restore optimizer state and step count from `--init`.
    #[arg(long, requires = "init")]
    pub resume: bool,
    /// Use this vocabulary instead of building one from the data.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Stop after the first step whose batch loss is below this value.
    #[arg(long)]
    pub stop_below: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// JSONL with a "source" field per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Defaults to the checkpoint's `max_decode_len`.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Defaults to vocab.json next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchKind {
    SsmEncoder,
    DenseAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = BenchKind::SsmEncoder)]
    pub kind: BenchKind,
    /// Comma-separated sequence lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [1024, 2048, 4096, 8192, 16384, 32768, 65536])]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub state: usize,
    #[arg(long, default_value_t = 128)]
    pub ff: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Lengths whose estimated footprint exceeds this many MiB are skipped.
    #[arg(long, default_value_t = 2048)]
    pub budget_mib: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub dtype: Precision,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// CSV destination for the per-length rows.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Classify the fixed curves 3·L·ln L and 2·L² instead of timing anything.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// JSON model configuration; defaults to the desk configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the vocabulary size.
    #[arg(long)]
    pub vocab: Option<usize>,
    /// Source and target length of the probe example.
    #[arg(long, default_value_t = 8)]
    pub len: usize,
    /// Finite-difference step; the initial step for `ridders`.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = StencilArg::Ridders)]
    pub stencil: StencilArg,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StencilArg {
    /// Two-point central difference.
    Central,
    /// Five-point central difference.
    FivePoint,
    /// Ridders' extrapolation of shrinking central differences.
    Ridders,
}

#[derive(Debug, Args)]
pub struct KernelVizArgs {
    /// Defaults to a freshly initialized desk model.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long, default_value_t = 1024)]
    pub len: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LOCOST_LOG", "info")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
