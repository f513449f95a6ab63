use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsmnet::metrics::EvalScale;
use lsmnet::refine::Method;
use lsmnet::sim::EdgeMeanConvention;

#[derive(Debug, Parser)]
#[command(
    name = "lsmnet",
    version,
    about = "Latent space models for compatibility networks"
)]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0, conflicts_with = "config")]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Re-run the job recorded in a manifest.json.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Exit 0 even if some fits did not converge.
    #[arg(long, global = true)]
    pub allow_nonconverged: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an observed network from a planted latent space model.
    SimulateNetwork(SimulateNetworkArgs),
    /// Simulate a synthetic transplant cohort (train and test splits).
    SimulateTransplants(SimulateTransplantsArgs),
    /// Fit one refinement method to a network and score it.
    Fit(FitArgs),
    /// Compare refinement methods on a train/test network pair.
    Eval(EvalArgs),
    /// Recovery study over both noise regimes and edge-mean conventions.
    Table1(Table1Args),
    /// Ridge Cox regression on a transplant dataset.
    Coxph(CoxphArgs),
    /// Coefficient refinement pipeline scored by test C-index.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Raw,
    Lsm,
    Nmtf,
    Pca,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Raw => Method::Raw,
            MethodArg::Lsm => Method::Lsm,
            MethodArg::Nmtf => Method::Nmtf,
            MethodArg::Pca => Method::Pca,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConventionArg {
    PairTerm,
    Full,
}

impl From<ConventionArg> for EdgeMeanConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::PairTerm => EdgeMeanConvention::PairTermOnly,
            ConventionArg::Full => EdgeMeanConvention::FullCompatibility,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Compatibility,
    PairTerm,
}

impl From<ScaleArg> for EvalScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Compatibility => EvalScale::Compatibility,
            ScaleArg::PairTerm => EvalScale::PairTerm,
        }
    }
}

#[derive(Debug, Args)]
pub struct LatentArgs {
    #[arg(long, default_value_t = 20)]
    pub n_d: usize,
    #[arg(long, default_value_t = 20)]
    pub n_r: usize,
    /// Latent dimension of the planted model.
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub pos_std: Option<f64>,
    #[arg(long)]
    pub effect_std: Option<f64>,
    #[arg(long, default_value_t = 0.15)]
    pub sigma_node: f64,
    #[arg(long, value_enum, default_value_t = ConventionArg::PairTerm)]
    pub edge_mean: ConventionArg,
}

#[derive(Debug, Args)]
pub struct SimulateNetworkArgs {
    #[command(flatten)]
    pub latent: LatentArgs,
    #[arg(long, default_value_t = 0.15)]
    pub sigma_w: f64,
    /// Also write an independent second observation under holdout/.
    #[arg(long)]
    pub holdout: bool,
}

#[derive(Debug, Args)]
pub struct FitSettingsArgs {
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    /// Hold beta at 1.
    #[arg(long)]
    pub freeze_beta: bool,
    #[arg(long, default_value_t = 2000)]
    pub nmtf_max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SimulateTransplantsArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[arg(long, default_value_t = 4000)]
    pub n_per_split: usize,
    #[arg(long, default_value_t = 16)]
    pub donor_types: usize,
    #[arg(long, default_value_t = 16)]
    pub recipient_types: usize,
    #[arg(long, default_value_t = 4)]
    pub n_basic: usize,
    #[arg(long, default_value_t = 0.75)]
    pub censor_fraction: f64,
    /// Shuffle the planted pair effects (negative control).
    #[arg(long)]
    pub no_structure: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory holding the network CSVs.
    #[arg(long)]
    pub network: PathBuf,
    /// Held-out network to score against (defaults to the fitted network).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Lsm)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 2, conflicts_with = "dim_grid")]
    pub dim: usize,
    /// Comma-separated dimensions; the best mean log-probability wins.
    #[arg(long, value_delimiter = ',')]
    pub dim_grid: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Compatibility)]
    pub scale: ScaleArg,
    #[command(flatten)]
    pub settings: FitSettingsArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "raw,lsm,nmtf,pca"
    )]
    pub methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub dim_grid: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Compatibility)]
    pub scale: ScaleArg,
    #[command(flatten)]
    pub settings: FitSettingsArgs,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long, default_value_t = 15)]
    pub reps: usize,
    /// Edge noise levels, one regime each.
    #[arg(long, value_delimiter = ',', default_value = "0.15,1.5")]
    pub sigmas: Vec<f64>,
    /// Estimate beta instead of holding it at 1.
    #[arg(long)]
    pub free_beta: bool,
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[command(flatten)]
    pub latent: LatentArgs,
}

#[derive(Debug, Args)]
pub struct CoxphArgs {
    /// Transplant dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset to report the C-index on.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
    /// Fixed ridge penalty (skips cross-validation).
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Use this dataset, split 50/50 per seed, instead of synthetic cohorts.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Substitute the raw estimates back unchanged (every delta must be 0).
    #[arg(long)]
    pub identity_refinement: bool,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "lsm,nmtf,pca"
    )]
    pub methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 10)]
    pub min_count: usize,
    #[arg(long, default_value_t = 2)]
    pub lsm_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub pca_dim: usize,
    #[arg(long, default_value_t = 2)]
    pub nmtf_rank: usize,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[command(flatten)]
    pub settings: FitSettingsArgs,
}
