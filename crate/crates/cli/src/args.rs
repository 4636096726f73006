use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "xmpo", version, about = "Multi-property molecular optimization with edge explanations")]
pub struct Cli {
    /// Flat key=value file whose entries act as flags; flags on the command
    /// line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse QM9 records into a standardized dataset cache.
    Ingest(IngestArgs),
    /// Train the property model.
    TrainEgnn(TrainEgnnArgs),
    /// Train the conditional denoiser.
    TrainDiffusion(TrainDiffusionArgs),
    /// Draw molecules from a trained denoiser.
    Sample(SampleArgs),
    /// Report per-property mean absolute errors.
    Eval(EvalArgs),
    /// Attribute a property model's predictions to molecular edges.
    Explain(ExplainArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::TrainEgnn(_) => "train-egnn",
            Command::TrainDiffusion(_) => "train-diffusion",
            Command::Sample(_) => "sample",
            Command::Eval(_) => "eval",
            Command::Explain(_) => "explain",
        }
    }
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory receiving every artifact and the run manifest.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectralArg {
    Off,
    Decoder,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    Ours,
    OursQed,
    Full,
    FullSingle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegularizerArg {
    LogOnly,
    LossScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccuracyArg {
    Reciprocal,
    NegativeAbsError,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// QM9 file, gzipped file, or directory of records.
    #[arg(long)]
    pub input: PathBuf,
    /// Cache path; defaults to `<out-dir>/dataset.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep at most this many valid records.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `auto`, `complete`, or `radius:<angstrom>`.
    #[arg(long, default_value = "auto")]
    pub edge_mode: String,
    #[arg(long)]
    pub drop_hydrogens: bool,
    /// Append a scaled atomic-number channel to atom features.
    #[arg(long)]
    pub charge_channel: bool,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Learning rate [default: 1e-2 for train-egnn, 2e-2 for train-diffusion]
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Minibatch size [default: 4 for train-egnn, 8 for train-diffusion]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated property names, e.g. `alpha,gap`.
    #[arg(long, default_value = "alpha,gap,homo,lumo,mu,cv")]
    pub properties: String,
    /// Comma-separated non-negative weights, normalized to sum to one.
    #[arg(long)]
    pub weights: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainEgnnArgs {
    /// Dataset cache written by `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, value_enum, default_value_t = SpectralArg::Decoder)]
    pub spectral: SpectralArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct TrainDiffusionArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Property-model checkpoint scoring generated molecules.
    #[arg(long)]
    pub egnn: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Diffusion timesteps.
    #[arg(long, default_value_t = 100)]
    pub timesteps: usize,
    #[arg(long, value_enum, default_value_t = AblationArg::Full)]
    pub ablation: AblationArg,
    /// Refresh period of the sample-based terms selected by the ablation.
    #[arg(long, default_value_t = 10)]
    pub period: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = RegularizerArg::LogOnly)]
    pub regularizer_mode: RegularizerArg,
    #[arg(long, default_value_t = 2)]
    pub sample_batch: usize,
    #[arg(long, default_value_t = 0.2)]
    pub drop_fraction: f64,
    #[arg(long, value_enum, default_value_t = AccuracyArg::Reciprocal)]
    pub accuracy: AccuracyArg,
    #[arg(long, default_value_t = 256)]
    pub shapley_samples: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    pub split: SplitArg,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub denoiser: PathBuf,
    #[arg(long)]
    pub n_atoms: usize,
    /// Comma-separated standardized property targets.
    #[arg(long)]
    pub condition: String,
    /// Names written alongside the condition; defaults to the leading
    /// property names.
    #[arg(long)]
    pub properties: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 100)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub egnn: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value = "alpha,gap,homo,lumo,mu,cv")]
    pub properties: String,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub egnn: PathBuf,
    /// XYZ file holding the molecule (first frame).
    #[arg(long, conflicts_with = "data")]
    pub molecule: Option<PathBuf>,
    /// Dataset cache; pick the molecule with `--index`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value = "alpha,gap,homo,lumo,mu,cv")]
    pub properties: String,
    /// Coalitions to evaluate; `min(2^edges, 2048)` when omitted.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub drop_fraction: f64,
    #[arg(long, value_enum, default_value_t = AccuracyArg::Reciprocal)]
    pub accuracy: AccuracyArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutDir,
}
