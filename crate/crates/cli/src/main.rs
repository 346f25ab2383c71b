//! `delineate`: batch command-line driver for the field-delineation pipeline.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use delineate_core::records::Source;

use crate::config::FileConfig;
use crate::error::Failure;

#[derive(Parser, Debug)]
#[command(name = "delineate", version, about = "Classify publications into a research field and evaluate the result")]
struct Cli {
    /// Optional TOML config; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stratified train/dev/test split of a labeled corpus.
    Split(SplitArgs),
    /// Build a model file for one method.
    Train(TrainArgs),
    /// Score a corpus with a model file.
    Predict(PredictArgs),
    /// Per-year precision, recall and F1 of prediction files against labels.
    Evaluate(EvaluateArgs),
    /// Share of each field of study predicted relevant, per method.
    Crosstab(CrosstabArgs),
    /// Cluster duplicate records across corpora.
    Dedup(DedupArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    Keywords,
    LexiconForest,
    EmbeddingLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    PositiveOnly,
    TwoClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionArg {
    Train,
    Dev,
    Test,
}

/// Input-reading options shared by commands that ingest a corpus.
#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus JSONL file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Read the corpus as an unlabeled export from this source instead of
    /// a labeled arXiv file.
    #[arg(long)]
    pub source: Option<Source>,
    /// Skip malformed lines (counted in the manifest) instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Labeled corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Dev fraction (default 0.1).
    #[arg(long)]
    pub dev: Option<f64>,
    /// Test fraction (default 0.1).
    #[arg(long)]
    pub test: Option<f64>,
    /// Subject config TOML (default: the six-subject definition).
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Labeled corpus JSONL (not needed for `keywords`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Split file; training uses its train partition only.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Term list for `keywords`, scored TSV for `lexicon_forest`.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Embedding JSONL for `embedding_linear`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Grid JSON: `{"axes": {...}, "folds": 5}`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Embedding JSONL, required by `embedding_linear` models.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Split file to restrict scoring to one partition.
    #[arg(long, requires = "partition")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    pub partition: Option<PartitionArg>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Prediction files, as `name=path` or `path` (name = file stem).
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<String>,
    /// Labeled corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub subjects: Option<PathBuf>,
    /// Split file to restrict labels to one partition.
    #[arg(long, requires = "partition")]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, requires = "split")]
    pub partition: Option<PartitionArg>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub layout: Option<Layout>,
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args, Debug)]
pub struct CrosstabArgs {
    /// Prediction files, as `name=path` or `path`.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<String>,
    /// Corpus carrying `field_scores`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Source of the corpus (default mag).
    #[arg(long)]
    pub source: Option<Source>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    /// Unlabeled corpora as `source=path`, e.g. `wos=wos.jsonl`.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pairs held in memory per blocking pass before spilling to disk.
    #[arg(long)]
    pub max_in_memory: Option<usize>,
    /// Canonical-record source order, e.g. `wos,dimensions,mag`.
    #[arg(long, value_delimiter = ',')]
    pub priority: Option<Vec<Source>>,
    #[arg(long)]
    pub skip_invalid: bool,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file_config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.workers.or(file_config.workers) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input("Workers", e.to_string()))?;
    }
    match cli.command {
        Command::Split(a) => commands::split(a, &file_config),
        Command::Train(a) => commands::train(a, &file_config),
        Command::Predict(a) => commands::predict(a, &file_config),
        Command::Evaluate(a) => commands::evaluate(a, &file_config),
        Command::Crosstab(a) => commands::crosstab(a, &file_config),
        Command::Dedup(a) => commands::dedup(a, &file_config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code)
        }
    }
}
