use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "timeleak", version, about = "Detect and quantify timing side channels with neural timing models")]
pub struct Cli {
    /// Worker threads for parallel training (default: all cores).
    #[arg(long, global = true, env = "TIMELEAK_THREADS")]
    pub threads: Option<usize>,

    /// JSON file with default values for any flag (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic trace CSV with schema and ground-truth sidecars.
    Gen(GenArgs),
    /// Train one network at a fixed interface width.
    Train(TrainArgs),
    /// Train across k = 0..=k_max and choose the interface width.
    Sweep(SweepArgs),
    /// Count secrets per interface class for a trained model.
    Analyze(AnalyzeArgs),
    /// Turn a census into entropy figures.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Rn,
    Bl,
    Sort,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// R_n preset name (rn family), e.g. R_3.
    #[arg(long)]
    pub preset: Option<String>,
    /// Variants per loop complexity (bl family).
    #[arg(long = "i")]
    pub variants: Option<usize>,
    /// Secret bits (bl family; default i + 8).
    #[arg(long)]
    pub bits: Option<usize>,
    /// Largest public loop bound N (bl family).
    #[arg(long)]
    pub n_max: Option<i64>,
    /// Longest array (sort family).
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    /// Relative Gaussian noise on times (rn and bl families).
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; sidecars are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ArchArgs {
    /// Take network widths and learning rate from an R_n preset.
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated hidden widths of the secret branch.
    #[arg(long, value_delimiter = ',')]
    pub secret_widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub public_widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub joint_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Trace CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema sidecar (default: `<data>.schema.json` when present).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    /// Interface width.
    #[arg(long)]
    pub k: Option<usize>,
    /// Output model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Relative SSE improvement that still counts as progress.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Max-residual tolerance (time units) for the detection verdict.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seeds_per_k: Option<usize>,
    /// Directory for sweep.json, per-k models and the SSE plot.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Trained model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Per-class count cap (default: the secret domain size, or 10000).
    #[arg(long)]
    pub cap: Option<u64>,
    /// Search node budget.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Output census JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub census: PathBuf,
    /// Sweep JSON that chose the analyzed model.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
}
