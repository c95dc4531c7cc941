use std::path::PathBuf;

use asreader::training::{TrainConfig, EVAL_BATCH_SIZE};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "asreader",
    version,
    about = "Attention sum reader for cloze-style question answering"
)]
pub struct Cli {
    /// Directory that relative dataset paths are resolved against
    #[arg(long, global = true, env = "ASREADER_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    /// Dataset format; `auto` picks by extension (.jsonl/.json, .txt = CBT, .question/.questions = news)
    #[arg(long, global = true, value_enum, default_value_t = Format::Auto)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Auto,
    Jsonl,
    Cbt,
    News,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its checkpoint and per-epoch log
    #[command(allow_negative_numbers = true)]
    Train(TrainArgs),
    /// Score a dataset with a checkpoint and write a prediction file
    Evaluate(EvaluateArgs),
    /// Rank the candidates of one example and dump its attention weights
    Predict(PredictArgs),
    /// Combine prediction files by averaging
    Ensemble(EnsembleArgs),
    /// Break accuracy down by length, candidate count and answer frequency rank
    Analyze(AnalyzeArgs),
    /// Write a synthetic marker-task dataset
    GenSynthetic(GenSyntheticArgs),
    /// Finite-difference gradient check of a toy model
    Gradcheck(GradcheckArgs),
}

fn defaults() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with training settings; flags given on the command line override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset
    #[arg(long = "train")]
    pub train_path: Option<PathBuf>,
    /// Validation dataset used for early stopping
    #[arg(long = "valid")]
    pub valid_path: Option<PathBuf>,
    #[arg(long, visible_alias = "lr", default_value_t = defaults().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = defaults().batch_size)]
    pub batch_size: usize,
    /// Global gradient norm threshold
    #[arg(long, default_value_t = defaults().clip_threshold)]
    pub clip_threshold: f64,
    /// Embedding size E
    #[arg(long, default_value_t = defaults().embed_dim)]
    pub embed_dim: usize,
    /// GRU hidden size H per direction
    #[arg(long, default_value_t = defaults().hidden_dim)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = defaults().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = defaults().max_epochs)]
    pub max_epochs: usize,
    /// Batches per length-sorted buffer
    #[arg(long, default_value_t = defaults().prefetch)]
    pub prefetch: usize,
    /// Epochs below the best validation accuracy before stopping
    #[arg(long, default_value_t = defaults().patience)]
    pub patience: usize,
    /// Permute entity ids within each training batch
    #[arg(long, action = ArgAction::Set, default_value_t = defaults().reshuffle_entities)]
    pub reshuffle_entities: bool,
    /// Keep only the most frequent tokens [default: unlimited]
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Model id written into prediction files [default: name of the output directory]
    #[arg(long)]
    pub model_id: Option<String>,
    /// Fill the wall_time column of the log (makes logs differ between runs)
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction file to write
    #[arg(long, default_value = "predictions.tsv")]
    pub out: PathBuf,
    /// Model id for the prediction header [default: checkpoint file stem]
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long, default_value_t = EVAL_BATCH_SIZE)]
    pub batch_size: usize,
    /// Also write per-position attention weights as JSON lines
    #[arg(long)]
    pub attention: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset holding the example
    #[arg(long, requires = "id", conflicts_with_all = ["document", "query"])]
    pub data: Option<PathBuf>,
    /// Example id within --data
    #[arg(long)]
    pub id: Option<String>,
    /// Whitespace-tokenized document
    #[arg(long, requires = "query")]
    pub document: Option<String>,
    /// Whitespace-tokenized query containing @placeholder
    #[arg(long, requires = "document")]
    pub query: Option<String>,
    /// Whitespace-separated candidates [default: entity tokens of the document]
    #[arg(long)]
    pub candidates: Option<String>,
    /// Write the report here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Average the best 70% of models by validation accuracy
    Avg,
    /// Greedy forward selection on validation accuracy
    Greedy,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Validation prediction files, one per model
    #[arg(required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Avg)]
    pub mode: Mode,
    /// Labeled validation dataset; required for greedy, optional for avg
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Prediction files of the same models on another split, combined with the selected members
    #[arg(long, num_args = 1..)]
    pub apply: Vec<PathBuf>,
    /// Combined prediction file; the report goes next to it as <out>.report.json
    #[arg(long, default_value = "ensemble.tsv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Labeled dataset the predictions were made on
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "analysis")]
    pub out_dir: PathBuf,
    /// Equal-size document length buckets
    #[arg(long, default_value_t = 10)]
    pub buckets: usize,
    /// Highest frequency rank with its own row
    #[arg(long, default_value_t = 10)]
    pub max_rank: usize,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 100)]
    pub examples: usize,
    #[arg(long, default_value_t = 20)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
    /// Distinct entity tokens to draw candidates from
    #[arg(long, default_value_t = 20)]
    pub entity_pool: usize,
    #[arg(long, default_value_t = 30)]
    pub filler_words: usize,
    #[arg(long, default_value = "syn")]
    pub id_prefix: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random toy models to check
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    /// Central difference step
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error per tensor
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}
