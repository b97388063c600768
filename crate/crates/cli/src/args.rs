use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pccorrupt", version, about = "Point-cloud corruption benchmark toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a corrupted dataset from a directory of meshes or clouds.
    Gen(GenArgs),
    /// Apply one corruption to one file.
    Apply(ApplyArgs),
    /// Train the classifier on the clean clouds of a generated dataset.
    Train(TrainArgs),
    /// Predict every clean and corrupted cloud of a dataset.
    Eval(EvalArgs),
    /// Run the PGD attack on the clean clouds of a dataset.
    Attack(AttackArgs),
    /// Compute an error-rate report from a prediction CSV.
    Bench(BenchArgs),
    /// Convert between OFF, PLY and raw formats.
    Export(ExportArgs),
    /// Write a synthetic labeled mesh set (spheres, cubes, pyramids, cylinders).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated corruption names, or "all".
    #[arg(long)]
    pub kinds: Option<String>,
    /// Comma-separated severities, or "all".
    #[arg(long)]
    pub severities: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Severity table JSON.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Write ASCII PLY instead of binary.
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub severity: u8,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub ascii: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest (or its directory).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path to write.
    #[arg(long)]
    pub output: PathBuf,
    /// JSON training configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// none, cutmix_r, cutmix_k, mixup or rsmix.
    #[arg(long)]
    pub augmentation: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Points drawn per sample at each step.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub val_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdaptArg {
    None,
    Bn,
    Tent,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Prediction CSV to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = AdaptArg::None)]
    pub adapt: AdaptArg,
    /// Weight of batch statistics for `--adapt bn`.
    #[arg(long, default_value_t = 1.0)]
    pub blend: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tent_lr: f64,
    #[arg(long, default_value_t = 1)]
    pub tent_steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Comma-separated subset of corruptions to evaluate.
    #[arg(long)]
    pub kinds: Option<String>,
    #[arg(long)]
    pub no_clean: bool,
    /// Include logits in the CSV.
    #[arg(long)]
    pub logits: bool,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the summary and adversarial clouds.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub steps: usize,
    #[arg(long)]
    pub no_random_init: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_clouds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Markdown,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Ascii,
    Binary,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output path; `.ply`, `.bin`/`.raw` or `.off` (meshes only).
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
    pub encoding: EncodingArg,
    /// Surface samples when converting a mesh to a cloud.
    #[arg(long, default_value_t = 1024)]
    pub points: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub per_class: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}
