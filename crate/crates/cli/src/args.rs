use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "copytag", version, about = "Nearest-neighbor sequence tagger that copies labels from retrieved sentences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a labeled database and persist its retrieval index.
    BuildIndex(BuildIndexArgs),
    /// Fine-tune the hashed-feature embedder on a labeled corpus.
    Train(TrainArgs),
    /// Tag sentences by copying labels from a database.
    Tag(TagArgs),
    /// Score predicted labels against gold labels.
    Eval(EvalArgs),
    /// Decode at several segment costs and write a CSV of metrics.
    Sweep(SweepArgs),
    /// Show where each token's label comes from for one input sentence.
    Inspect(InspectArgs),
}

/// Column layout of CoNLL-style files.
#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Zero-based token column.
    #[arg(long, default_value_t = 0)]
    pub token_col: usize,
    /// Zero-based tag column; -1 selects the last column.
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    pub tag_col: i64,
}

/// Embedder shape used when no checkpoint is given.
#[derive(Debug, Clone, Args)]
pub struct EmbedderArgs {
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 1 << 18)]
    pub buckets: usize,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub hash_seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
}

/// Where embeddings come from: a checkpoint, precomputed sidecars, or a
/// fresh (untrained) embedder.
#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Precomputed embeddings for the database sentences.
    #[arg(long, requires = "input_emb", conflicts_with = "ckpt")]
    pub db_emb: Option<PathBuf>,
    /// Precomputed embeddings for the input sentences.
    #[arg(long, requires = "db_emb", conflicts_with = "ckpt")]
    pub input_emb: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Precomputed embeddings for the database sentences.
    #[arg(long, conflicts_with = "ckpt")]
    pub emb: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Refresh {
    PerBatch,
    PerEpoch,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Neighbors retrieved per training sentence.
    #[arg(long, default_value_t = 50)]
    pub neighbors: usize,
    /// Neighbors retrieved per dev sentence.
    #[arg(long, default_value_t = 100)]
    pub test_neighbors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Refresh::PerBatch)]
    pub refresh: Refresh,
    /// Let a training sentence retrieve itself.
    #[arg(long)]
    pub include_self: bool,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    Marginal,
    Dp,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Labeled database to copy from.
    #[arg(long)]
    pub db: PathBuf,
    /// Sentences to tag; only the token column is read.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Persisted index for the database (must match the provider).
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub neighbors: usize,
    #[arg(long, value_enum, default_value_t = DecodeMode::Marginal)]
    pub decode: DecodeMode,
    /// Segment cost for --decode dp.
    #[arg(long, default_value_t = 0.4)]
    pub c: f64,
    /// Longest copied segment for --decode dp.
    #[arg(long, default_value_t = 64)]
    pub l_max: usize,
    /// Print copy provenance for every sentence to standard output.
    #[arg(long)]
    pub explain: bool,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Require span scores (labels must be BIO).
    #[arg(long)]
    pub spans: bool,
    /// Also write the metrics to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

/// Comma-separated list of segment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CGrid(pub Vec<f64>);

impl FromStr for CGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?} in c grid")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err("c values must be finite and non-negative".into());
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err("c grid must be strictly ascending".into());
        }
        Ok(CGrid(values))
    }
}

impl std::fmt::Display for CGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long)]
    pub db: PathBuf,
    /// Labeled data to decode and score.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1")]
    pub c_grid: CGrid,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 64)]
    pub l_max: usize,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Zero-based position of the sentence in the input file.
    #[arg(long)]
    pub sentence_id: usize,
    #[arg(long, default_value_t = 100)]
    pub neighbors: usize,
    /// Segment cost for the segment view.
    #[arg(long, default_value_t = 0.4)]
    pub c: f64,
    /// Copy sources listed per token.
    #[arg(long, default_value_t = 3)]
    pub top: usize,
    #[command(flatten)]
    pub layout: LayoutArgs,
}
