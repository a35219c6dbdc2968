use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pglimmer", version, about = "Batch and progressive Glimmer MDS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV (or a directory of chunk files).
    Generate(GenerateArgs),
    /// Embed a dataset and write plot-ready results.
    Run(RunArgs),
    /// Run a paired-experiment suite and write an aggregate CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Uniform,
    Walk,
    Plane,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub points: usize,
    #[arg(long)]
    pub dims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian step scale between consecutive dimensions (walk).
    #[arg(long, default_value_t = 0.1)]
    pub walk_scale: f64,
    /// Intrinsic dimension (plane).
    #[arg(long, default_value_t = 2)]
    pub intrinsic: usize,
    /// Gaussian noise added to every value (plane).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Write a directory of chunk files with this many columns each
    /// instead of one CSV.
    #[arg(long)]
    pub split_width: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Batch,
    Progressive,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Temporal,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    First2,
    Glimmer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FullStressArg {
    PerChunk,
    Final,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Window,
    All,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// CSV file or directory of `*.csv` chunk files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Replay the configuration recorded in a previous run's manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Columns per chunk when the input is a single CSV.
    #[arg(long)]
    pub chunk_width: Option<usize>,
    /// Iteration cap per progression step: a number or `unlimited`.
    #[arg(long)]
    pub max_iters: Option<String>,
    #[arg(long, value_enum)]
    pub order: Option<OrderArg>,
    #[arg(long)]
    pub order_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Chunks evicted per sliding step.
    #[arg(long)]
    pub evict: Option<usize>,
    /// Chunks in the initial sliding window.
    #[arg(long)]
    pub window_chunks: Option<usize>,
    /// Also write an embedding every N iterations inside a step.
    #[arg(long)]
    pub emit_every: Option<usize>,
    #[arg(long, value_enum)]
    pub full_stress: Option<FullStressArg>,
    /// Dimensions the per-step stress is measured on.
    #[arg(long, value_enum)]
    pub stress_reference: Option<ReferenceArg>,
    /// Write a Shepard sample of this many pairs per step.
    #[arg(long)]
    pub shepard_pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    /// Relative tolerance of the convergence test.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Runtime,
    OverlapSweep,
    OrderCompare,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub chunk_width: Option<usize>,
    /// Sliding window width in dimensions (overlap-sweep).
    #[arg(long)]
    pub window: Option<usize>,
    /// Percent of the window replaced per step (overlap-sweep).
    #[arg(long, value_delimiter = ',')]
    pub changes: Option<Vec<usize>>,
    /// Sliding steps after the initial window (overlap-sweep).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<String>,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
