use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

/// Multivariate response regression with a mean-covariance linked criterion.
#[derive(Debug, Parser)]
#[command(name = "mvlink", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Seed for fold assignment and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent fits.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for output files (created if absent).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a given (tau, lambda) or with cross-validated tuning.
    Fit(FitArgs),
    /// Cross-validate over a (tau, lambda) grid and report the error surface.
    Cv(CvArgs),
    /// Predict responses from a saved model.
    Predict(PredictArgs),
    /// Draw a data set from one of the simulation models.
    Simulate(SimulateArgs),
    /// Run the Monte Carlo comparison of all estimators.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    L1,
    Group,
    SparseGroup,
    Nuclear,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Predictor matrix (CSV with header).
    #[arg(long)]
    pub x: PathBuf,
    /// Response matrix (CSV with header; NA marks a missing entry).
    #[arg(long)]
    pub y: PathBuf,
    /// Covariates measured without error.
    #[arg(long)]
    pub v: Option<PathBuf>,
    /// 0/1 matrix of observed responses, combined with any NA cells.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyKind>,
    /// Entrywise weight of the sparse-group penalty.
    #[arg(long)]
    pub l1_weight: Option<f64>,
    /// Row weight of the sparse-group penalty.
    #[arg(long)]
    pub group_weight: Option<f64>,
    /// Relative objective change that stops the solver.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Initial inverse step size (default: curvature bound at the start).
    #[arg(long)]
    pub t0: Option<f64>,
    /// Factor applied to the inverse step size on a failed line search.
    #[arg(long)]
    pub step_growth: Option<f64>,
    /// Plain proximal gradient steps without extrapolation.
    #[arg(long)]
    pub no_accelerate: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub folds: Option<usize>,
    /// Number of lambda values per tau.
    #[arg(long)]
    pub num_lambdas: Option<usize>,
    /// Ratio of the smallest to the largest lambda.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated tau candidates.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Select tau and lambda by cross-validation.
    #[arg(long)]
    pub cv: bool,
    /// Second cross-validation pass on a finer tau grid around the first choice.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Manifest written by `fit`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub v: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Simulation model: 1 (linked error covariance) or 2 (noisy predictors).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub model: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Response noise variance.
    #[arg(long)]
    pub gamma_sq: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Measurement noise variance.
    #[arg(long)]
    pub sigma_u_sq: Option<f64>,
    /// Autoregressive correlation of the predictors.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Comma-separated measurement noise variances.
    #[arg(long, value_delimiter = ',')]
    pub sigma_u: Option<Vec<f64>>,
    /// Comma-separated subset of MC, Lasso-1, Lasso-q, CA, CoCo-1, CoCo-q.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Test set size for prediction error.
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Also write gnuplot data files, one per metric.
    #[arg(long)]
    pub plots: bool,
}
