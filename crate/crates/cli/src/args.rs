use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "crisiskd", version, about = "Crisis help-request/offer classification pipeline")]
pub struct Cli {
    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true, env = "CRISIS_SEED")]
    pub seed: Option<u64>,
    /// JSON config file. Flags and CRISIS_* variables override its values.
    #[arg(long, global = true, env = "CRISIS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "CRISIS_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unanimous-agreement filtering and validation-sample drawing.
    BuildDataset(BuildDatasetArgs),
    /// Cohen's kappa of machine labels against human annotators.
    Validate(ValidateArgs),
    /// Train a byte-level BPE tokenizer on a JSONL corpus.
    Tokenizer(TokenizerArgs),
    /// Train the teacher classifier on labelled records.
    TrainTeacher(TrainArgs),
    /// Repeated fine-tuning runs with a confidence interval.
    Finetune(TrainArgs),
    /// Task-specific or generic knowledge distillation.
    Distill(DistillArgs),
    /// Generic distillation with mean-pool vs CLS student pooling.
    ComparePooling(ComparePoolingArgs),
    /// Inference latency and throughput.
    Bench(BenchArgs),
    /// R/O ratios, top regions and monthly trends.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// CSV with header `id,annotator_1,...`.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Optional JSONL corpus to attach text to agreed records.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, env = "CRISIS_MARGIN")]
    pub margin: Option<f64>,
    #[arg(long, env = "CRISIS_CONFIDENCE")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// CSV `id,label` of machine-assigned labels.
    #[arg(long)]
    pub machine: PathBuf,
    /// CSV `id,label` per human annotator; repeat the flag.
    #[arg(long = "human", required = true)]
    pub humans: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TokenizerArgs {
    /// JSONL corpus of records with a `text` field.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, env = "CRISIS_VOCAB_SIZE")]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled JSONL records.
    #[arg(long)]
    pub data: PathBuf,
    /// Architecture preset (teacher, s_m, s_s, s_t, or paper-scale names).
    #[arg(long)]
    pub preset: Option<String>,
    /// Start from this model directory's encoder (a fresh head is added).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Directory with vocab.txt and merges.txt; trained on --data if absent.
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    #[arg(long, env = "CRISIS_MAX_LENGTH")]
    pub max_length: Option<usize>,
    #[arg(long, env = "CRISIS_VOCAB_SIZE")]
    pub vocab_size: Option<usize>,
    #[arg(long, env = "CRISIS_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "CRISIS_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "CRISIS_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
    #[arg(long, env = "CRISIS_REPEATS")]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistillMode {
    Task,
    Generic,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long, value_enum)]
    pub mode: DistillMode,
    /// Teacher model directory.
    #[arg(long)]
    pub teacher: PathBuf,
    /// Student architecture preset.
    #[arg(long)]
    pub student: String,
    /// Labelled JSONL (task mode).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Unlabelled JSONL corpus (generic mode).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Student initialization for task mode (e.g. a generic-distilled model).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, env = "CRISIS_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "CRISIS_TEMPERATURE")]
    pub temperature: Option<f64>,
    #[arg(long, env = "CRISIS_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "CRISIS_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "CRISIS_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub pooling: Option<PoolingArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Cls,
}

#[derive(Debug, Args)]
pub struct ComparePoolingArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub student: String,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, env = "CRISIS_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "CRISIS_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "CRISIS_EPOCHS")]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Preset name or model directory; repeat to compare several.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Preset name or model directory used as the speedup denominator.
    #[arg(long)]
    pub baseline: String,
    #[arg(long, env = "CRISIS_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "CRISIS_ITERATIONS")]
    pub iterations: Option<usize>,
    #[arg(long, env = "CRISIS_WARMUP")]
    pub warmup: Option<usize>,
    #[arg(long, env = "CRISIS_INPUT_LENGTH")]
    pub input_length: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Country,
    City,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSONL of classified records, or raw records when --model is given.
    #[arg(long)]
    pub records: PathBuf,
    /// Classifier directory used to label raw records.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Six-class resource classifier directory.
    #[arg(long)]
    pub resource_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "country")]
    pub by: GroupArg,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Restrict the resource trend to these resource types.
    #[arg(long = "resource", value_delimiter = ',')]
    pub resources: Vec<String>,
}
