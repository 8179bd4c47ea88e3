use std::path::PathBuf;
use std::sync::LazyLock;

use clap::{Args, Parser, Subcommand};
use d2dra::oracle::GridSpec;
use d2dra::Goal;

static LONG_VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{}\ndataset format {}\nmodel format {}\noracle cache format {}",
        d2dra::VERSION,
        d2dra::chanmodel::DATASET_FORMAT_VERSION,
        d2dra::ranet::MODEL_FORMAT_VERSION,
        d2dra::oracle::CACHE_FORMAT_VERSION
    )
});

pub fn long_version() -> &'static str {
    &LONG_VERSION
}

#[derive(Debug, Parser)]
#[command(name = "d2dra", version, long_version = long_version(), about = "Learned power allocation for underlay D2D networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a channel dataset.
    GenData(GenDataArgs),
    /// Train an allocation network for one goal.
    Train(TrainArgs),
    /// Run an area-size sweep against the grid oracle.
    Eval(EvalArgs),
    /// Solve dataset instances with the grid oracle.
    Oracle(OracleArgs),
    /// Time network inference against the grid oracle.
    Bench(BenchArgs),
    /// Run a trained model on one instance.
    Infer(InferArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML file with [system], [train], [arch], [sweep] and [oracle] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
    /// Worker threads (1 keeps every output bit-reproducible).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SystemFlags {
    #[arg(long)]
    pub n_due: Option<usize>,
    #[arg(long)]
    pub n_channels: Option<usize>,
    /// Side of the square area, meters.
    #[arg(long)]
    pub area: Option<f64>,
    /// DUE power budget, dBm.
    #[arg(long)]
    pub p_max_dbm: Option<f64>,
    /// Interference threshold at the base station, dBm.
    #[arg(long)]
    pub i_thresh_dbm: Option<f64>,
    /// Minimum SE per DUE, bps/Hz.
    #[arg(long)]
    pub r_thresh: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Base Adam step size.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Interference penalty weight.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// QoS penalty weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Hidden layer width of both heads.
    #[arg(long)]
    pub width: Option<usize>,
    /// Weight layers per head.
    #[arg(long)]
    pub layers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub system: SystemFlags,
    #[arg(long, default_value_t = 40_000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the gains as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub goal: Goal,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss history CSV (default: <out>.history.csv).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated goals.
    #[arg(long, value_delimiter = ',')]
    pub goals: Option<Vec<Goal>>,
    /// Comma-separated area sizes in meters.
    #[arg(long, value_delimiter = ',')]
    pub d_list: Option<Vec<f64>>,
    /// Oracle grid as <k_total>x<k_split>.
    #[arg(long)]
    pub grid: Option<GridSpec>,
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Base seed of the generated datasets.
    #[arg(long)]
    pub seed_data: Option<u64>,
    /// Seed of network initialisation and shuffling.
    #[arg(long)]
    pub seed_train: Option<u64>,
    /// Record inference and oracle wall times (not reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Oracle cache directory [default: <out>/oracle-cache].
    #[arg(long, conflicts_with = "no_cache")]
    pub cache_dir: Option<PathBuf>,
    /// Solve the oracle without reading or writing a cache.
    #[arg(long)]
    pub no_cache: bool,
    /// Evaluate existing models instead of training (repeatable).
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Test dataset for --model evaluation.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub system: SystemFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Instance indices (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub index: Vec<usize>,
    /// Goal to report; all three when omitted.
    #[arg(long)]
    pub goal: Option<Goal>,
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// Maximum joint evaluations per instance.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Also write the report (and a manifest) to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub grid: Option<GridSpec>,
    /// Number of leading instances to time (at least 30).
    #[arg(long, default_value_t = 30)]
    pub instances: usize,
    /// Inference repetitions per instance.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}
