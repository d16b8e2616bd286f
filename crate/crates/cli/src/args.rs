use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Hierarchical item categories from implicit feedback.
#[derive(Debug, Parser)]
#[command(name = "hltf", version, about)]
pub struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest an event file, filter, split by time and write matrices.
    Prepare(PrepareArgs),
    /// Learn the hierarchy from the training matrix.
    Learn(LearnArgs),
    /// Write base and category-aware lists plus explanations.
    Recommend(RecommendArgs),
    /// Score list files against a truth matrix.
    Evaluate(EvaluateArgs),
    /// Base vs CAR with settings picked on validation, reported on test.
    Experiment(ExperimentArgs),
    /// Write a synthetic event file.
    Synth(SynthArgs),
    /// Serve the hierarchy and lists over HTTP (read-only).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Delimited user,item,timestamp file (gzip is detected).
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Single-byte field delimiter; `tab` for a tab.
    #[arg(long)]
    pub delimiter: Option<String>,
    #[arg(long)]
    pub user_column: Option<usize>,
    #[arg(long)]
    pub item_column: Option<usize>,
    #[arg(long)]
    pub time_column: Option<usize>,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub min_user_events: Option<usize>,
    #[arg(long)]
    pub min_item_events: Option<usize>,
    /// Train,validation,test fractions.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop once a layer has at most this many categories.
    #[arg(long)]
    pub tau: Option<usize>,
    /// UD-test threshold.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Largest category size.
    #[arg(long)]
    pub max_size: Option<usize>,
    /// EM steps on each finished category.
    #[arg(long)]
    pub em_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Representatives per node in the export.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Name recorded in the export.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct BaseArgs {
    /// pop, itemknn, userknn or wrmf.
    #[arg(long)]
    pub recommender: Option<String>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub reg: Option<f64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory written by `learn`; needed for --car.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub base: BaseArgs,
    /// List length.
    #[arg(long)]
    pub k: Option<usize>,
    /// Base list length handed to CAR.
    #[arg(long)]
    pub pool: Option<usize>,
    /// Also write category-aware lists and explanations.
    #[arg(long)]
    pub car: bool,
    /// CAR level counted from the top (default: most specific).
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long)]
    pub alpha: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// List file; repeat for several. Rows are named after the file stem.
    #[arg(long = "lists")]
    pub lists: Vec<PathBuf>,
    /// `test`, `valid` or a matrix file.
    #[arg(long)]
    pub truth: Option<String>,
    /// Comma-separated cutoffs.
    #[arg(long)]
    pub cutoffs: Option<String>,
    #[arg(long)]
    pub pair_budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file (TSV); the text table goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub base: BaseArgs,
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// CAR levels to try; empty means all.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub max_recall_drop: Option<f64>,
    #[arg(long)]
    pub pair_budget: Option<usize>,
    /// Evaluate users without training history too.
    #[arg(long)]
    pub include_cold: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// taste, two-level, three-level or three-level-wide.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// hierarchy.json written by `learn`.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// List file for /api/recommend.
    #[arg(long)]
    pub lists: Option<PathBuf>,
    /// Directory of UI assets served at /.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
}
