use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "densratio", version, about = "Contrastive scores as log density ratios")]
pub struct Cli {
    /// Worker threads for parallel stages (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an embedding file to EMB1 (or CSV/JSONL by extension), optionally normalizing.
    Ingest(IngestArgs),
    /// Calibrated text-by-image ratio matrix in long CSV form.
    Score(ScoreArgs),
    /// Per-query divergence, conformity or raw-norm metric.
    Kl(KlArgs),
    /// Mean and covariance of a paired reference set, as JSON.
    Moments(MomentsArgs),
    /// Bootstrap bias, variance and RMSE of a divergence metric.
    Bootstrap(BootstrapArgs),
    /// Relative RMSE across reference-set sizes.
    Sweep(SweepArgs),
    /// Filter a pool by one or more metrics and write a manifest.
    Curate(CurateArgs),
    /// Top-K n-gram coverage curves by metric decile.
    Ngram(NgramArgs),
    /// Write a Gaussian-mixture world as JSON.
    ToyGen(ToyGenArgs),
    /// Train a toy dual encoder on a world.
    ToyTrain(ToyTrainArgs),
    /// Compare a trained toy model's ratios with the analytic ones.
    ToyEval(ToyEvalArgs),
    /// Importance weights of images against one prompt embedding.
    IwlWeights(IwlWeightsArgs),
    /// Weighted vs unweighted toy training on one prompt component.
    IwlDemo(IwlDemoArgs),
    /// Pearson correlation matrix of several metric files.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Logit scale `a`.
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    /// Logit bias `b` (sigmoid flavor only).
    #[arg(long, default_value_t = 0.0)]
    pub bias: f64,
    /// softmax_contrastive | sigmoid_contrastive (aliases clip, siglip).
    #[arg(long, default_value = "softmax_contrastive")]
    pub flavor: String,
    /// Negatives per positive, for the nu_eb calibration.
    #[arg(long, default_value_t = 1)]
    pub nu: u32,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// emb1 | csv | jsonl; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// image | text; overrides what the file says.
    #[arg(long)]
    pub modality: Option<String>,
    /// Project rows onto the unit sphere.
    #[arg(long)]
    pub normalize: bool,
    /// Also write the raw row norms as a metric CSV.
    #[arg(long)]
    pub norms_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// empirical_z | nu_eb | none; defaults to the flavor's own.
    #[arg(long)]
    pub calibration: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KlArgs {
    /// d_kl | d_klr | d_c | d_w | conformity | raw_norm
    #[arg(long)]
    pub metric: String,
    #[arg(long)]
    pub queries: PathBuf,
    /// References from the other modality.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// References from the query's own modality (needed by d_c and d_w).
    #[arg(long)]
    pub refs_same: Option<PathBuf>,
    /// Modality of the queries.
    #[arg(long, default_value = "image")]
    pub query_modality: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefPairArgs {
    /// Reference texts, row-aligned with the reference images.
    #[arg(long)]
    pub ref_texts: PathBuf,
    #[arg(long)]
    pub ref_images: PathBuf,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    /// d_kl | d_klr | d_c | d_w
    #[arg(long)]
    pub metric: String,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value = "image")]
    pub query_modality: String,
    #[command(flatten)]
    pub refs: RefPairArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub metric: String,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value = "image")]
    pub query_modality: String,
    #[command(flatten)]
    pub refs: RefPairArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated reference-set sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,500,1000,5000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// JSONL pool; every line is an object with an "id".
    #[arg(long)]
    pub pairs: PathBuf,
    /// Metric CSV; repeat for several filters.
    #[arg(long, required = true)]
    pub metric: Vec<PathBuf>,
    /// One per --metric: a keep fraction like 0.25, or a threshold like ">=0.3".
    #[arg(long, required = true, allow_hyphen_values = true)]
    pub keep: Vec<String>,
    /// intersection | sequential
    #[arg(long, default_value = "intersection")]
    pub mode: String,
    /// by_id | stable
    #[arg(long, default_value = "by_id")]
    pub tie_rule: String,
    /// Also write the kept IDs, one per line.
    #[arg(long)]
    pub ids_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NgramArgs {
    /// JSONL captions: {"id", "text", "image_id"?}.
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub metric: PathBuf,
    /// own_metric | paired_image_metric
    #[arg(long, default_value = "own_metric")]
    pub group_by: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub orders: Vec<usize>,
    #[arg(long, default_value_t = 2500)]
    pub k_max: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyGenArgs {
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// ring | random; ring is the default for d = 2.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long, default_value_t = densratio::toy::world::DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = densratio::toy::world::DEFAULT_VARIANCE)]
    pub var: f64,
    /// Comma-separated priors; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write this many sampled pairs as CSV (label, x0, x1, ...).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecipeArgs {
    /// Training recipe JSON; the built-in default when omitted.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// clip | siglip (or the full flavor names); overrides the recipe.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    /// World JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub recipe: RecipeArgs,
    /// Per-step loss CSV.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    #[arg(long, default_value = "params.toy")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyEvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    /// empirical_z | nu_eb | none; the flavor's default when omitted.
    #[arg(long)]
    pub calibration: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label whose ratio grid to write (2-D worlds only).
    #[arg(long)]
    pub grid_label: Option<usize>,
    #[arg(long, default_value_t = 12.0)]
    pub grid_extent: f64,
    #[arg(long, default_value_t = 64)]
    pub grid_resolution: usize,
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IwlWeightsArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// Text embeddings holding the prompt.
    #[arg(long)]
    pub prompt: PathBuf,
    /// Row ID of the prompt; the first row when omitted.
    #[arg(long)]
    pub prompt_id: Option<String>,
    #[arg(long, default_value_t = densratio::ratio::DEFAULT_IWL_SCALE)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IwlDemoArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub prompt_label: usize,
    #[arg(long, default_value_t = densratio::ratio::DEFAULT_IWL_SCALE)]
    pub weight_scale: f64,
    #[arg(long)]
    pub reference_steps: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    #[command(flatten)]
    pub recipe: RecipeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Metric CSVs; aligned on the IDs of the first.
    #[arg(long, required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
