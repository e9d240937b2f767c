use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Parser)]
#[command(name = "pacmetric", version, about = "Captioning metrics, contrastive adapter training and SCST over precomputed embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON report destination; printed to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// CSV destination for the command's plottable series.
    #[arg(long, global = true)]
    pub plot_data: Option<PathBuf>,
    /// JSON file of defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Score captions against the images they describe.
    ScoreImage(ScoreImageArgs),
    /// Score captions against frame sequences.
    ScoreVideo(ScoreVideoArgs),
    /// Kendall and Spearman correlation with human judgments.
    EvalCorr(EvalCorrArgs),
    /// Preference accuracy on caption pairs.
    EvalPairwise(EvalPairwiseArgs),
    /// Accuracy at ranking correct captions above foils.
    EvalFoil(EvalFoilArgs),
    /// Train low-rank adapters on a synthetic clustered retrieval task.
    TrainPac(TrainPacArgs),
    /// Cross-entropy pre-training then SCST on the synthetic caption world.
    ScstDemo(ScstDemoArgs),
    /// Repetition and bad-ending statistics of a caption file.
    Grammar(GrammarArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory the manifest's embedding files are relative to; defaults to
    /// the manifest's directory.
    #[arg(long)]
    pub embeddings_dir: Option<PathBuf>,
    /// Use the reference-based score.
    #[arg(long)]
    pub refs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ImageMetricArgs {
    /// Scaling factor w.
    #[arg(long)]
    pub w: Option<f64>,
    /// Backbone label recorded in the report.
    #[arg(long)]
    pub backbone: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreImageArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub metric: ImageMetricArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdfSourceArg {
    Auto,
    References,
    Candidates,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreVideoArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum)]
    pub idf_source: Option<IdfSourceArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Raw,
    MeanProportionYes,
}

#[derive(Debug, Clone, Args)]
pub struct EvalCorrArgs {
    /// JSON-lines file of judgments.
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Dataset label for the report rows.
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub metric: ImageMetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalPairwiseArgs {
    /// JSON file with `pairs` and `ref_pool`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub refs_per_draw: Option<usize>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub metric: ImageMetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalFoilArgs {
    /// JSON file with `pairs` of correct and foil captions.
    #[arg(long)]
    pub foil: PathBuf,
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub metric: ImageMetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainPacArgs {
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long)]
    pub lambda_t: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Where to write the trained adapter checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScstDemoArgs {
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Reward with the reference-based score.
    #[arg(long)]
    pub refs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GrammarArgs {
    /// Plain-text captions, one per line.
    #[arg(long)]
    pub captions: PathBuf,
    /// Stop-list file replacing the built-in one.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
    #[arg(long)]
    pub max_n: Option<usize>,
}
