use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mmesbm", version, about = "Mixed-membership blockmodels with covariate-dependent memberships")]
pub struct Cli {
    /// Read settings from a `key = value` file; flags given on the command
    /// line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model with a fixed number of groups.
    Fit(FitArgs),
    /// Cross-validate over a range of group counts.
    Cv(CvArgs),
    /// Draw a network from a generative spec.
    Simulate(SimulateArgs),
    /// Parametric bootstrap intervals for the covariate coefficients.
    Bootstrap(BootstrapArgs),
    /// Compare observed and simulated network statistics.
    Gof(GofArgs),
    /// Fitted link probabilities for a list of dyads.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Edge list, one 1-based `i,j` pair per line.
    #[arg(long, value_name = "PATH", conflicts_with = "adjacency")]
    pub edges: Option<PathBuf>,
    /// Dense 0/1 adjacency matrix CSV.
    #[arg(long, value_name = "PATH")]
    pub adjacency: Option<PathBuf>,
    /// Number of actors (required with --edges unless a fit supplies it).
    #[arg(long)]
    pub n_actors: Option<usize>,
    /// Actor covariate CSV with a header row; omit for intercept only.
    #[arg(long, value_name = "PATH", requires = "schema")]
    pub covariates: Option<PathBuf>,
    /// Column encodings for --covariates.
    #[arg(long, value_name = "PATH")]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative change in the lower bound that stops a fit.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Spectral)]
    pub init: InitArg,
    /// Weight of random noise mixed into each starting membership.
    #[arg(long, default_value_t = 0.1)]
    pub init_noise: f64,
    /// First shape of the Beta prior on every block probability.
    #[arg(long, default_value_t = 1.0)]
    pub prior_a: f64,
    /// Second shape of the Beta prior on every block probability.
    #[arg(long, default_value_t = 1.0)]
    pub prior_b: f64,
    /// Sweeps between coefficient updates.
    #[arg(long, default_value_t = 1)]
    pub beta_interval: usize,
    /// Keep the coefficients at their starting values.
    #[arg(long)]
    pub fixed_beta: bool,
    /// Bound on the absolute value of every coefficient.
    #[arg(long, default_value_t = 30.0)]
    pub clip_bound: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub groups: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate group counts: `1..9` or `1,2,4`.
    #[arg(long)]
    pub groups: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON generative spec.
    #[arg(long, value_name = "PATH")]
    pub spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaSourceArg {
    PosteriorMean,
    PosteriorDraw,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    /// `fit.json` written by `fit`.
    #[arg(long, value_name = "PATH")]
    pub fit: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ThetaSourceArg::PosteriorMean)]
    pub theta_source: ThetaSourceArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GofArgs {
    #[arg(long, value_name = "PATH")]
    pub fit: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub simulations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub fit: PathBuf,
    /// Dyads to score, one 1-based `i,j` pair per line; default all dyads.
    #[arg(long, value_name = "PATH")]
    pub pairs: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
