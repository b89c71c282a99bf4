//! Simulation designs, estimation metrics and the benchmark driver.
//!
//! Two generating models are provided. In the first, predictors are observed
//! exactly and the response errors have covariance `σ²_u β'β + γ²I`. In the
//! second, a latent predictor `Z` drives the response and only `X = Z + U`
//! is observed, which induces the same conditional error covariance.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::competitors::{self, CompetitorOptions, LambdaMode};
use crate::data::{center_data, FitConfig, PenaltySpec, RegressionData};
use crate::error::{check_shape, Error, Result};
use crate::linalg;
use crate::tuning::{self, CvOptions};

/// Default response noise variance `γ²`.
pub const DEFAULT_GAMMA_SQ: f64 = 3.0;
/// Size of the independent test set used for prediction error.
pub const DEFAULT_TEST_SIZE: usize = 1000;
/// Entries with magnitude at or below this count as zero for support recovery.
pub const ZERO_TOL: f64 = 1e-8;
/// Noise variances compared in the benchmark.
pub const DEFAULT_SIGMA_U_VALUES: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimModel {
    /// Exactly observed predictors, linked error covariance.
    One,
    /// Predictors observed with additive noise.
    Two,
}

impl SimModel {
    pub fn default_ar_rho(self) -> f64 {
        match self {
            SimModel::One => 0.7,
            SimModel::Two => 0.5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SimModel::One => "1",
            SimModel::Two => "2",
        }
    }
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub sigma_u_sq: f64,
    pub gamma_sq: f64,
    pub model: SimModel,
    pub ar_rho: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(model: SimModel, n: usize, p: usize, q: usize, sigma_u_sq: f64, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            q,
            sigma_u_sq,
            gamma_sq: DEFAULT_GAMMA_SQ,
            model,
            ar_rho: model.default_ar_rho(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::InvalidParameter("n, p and q must be positive".into()));
        }
        if !(self.ar_rho.abs() < 1.0) {
            return Err(Error::InvalidParameter("autoregressive rho must lie in (-1, 1)".into()));
        }
        if !(self.sigma_u_sq >= 0.0 && self.sigma_u_sq.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be nonnegative".into()));
        }
        if !(self.gamma_sq > 0.0 && self.gamma_sq.is_finite()) {
            return Err(Error::InvalidParameter("gamma squared must be positive".into()));
        }
        Ok(())
    }
}

/// True coefficients and predictor covariances of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta_star: DMatrix<f64>,
    pub support: DMatrix<bool>,
    /// Covariance of the observed predictors.
    pub sigma_x: DMatrix<f64>,
    /// Covariance of the latent predictors (second model only).
    pub sigma_z: Option<DMatrix<f64>>,
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sparse coefficient matrix with three disjoint active triples.
///
/// Each column picks one triple uniformly and fills it with `±2`, then sets
/// three further positions outside that triple to `±1`.
pub fn gen_beta_star(p: usize, q: usize, seed: u64) -> Result<DMatrix<f64>> {
    if p < 12 {
        return Err(Error::InvalidParameter(format!("need p >= 12, got {p}")));
    }
    if q == 0 {
        return Err(Error::InvalidParameter("need q >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, p, 9).into_vec();
    let triples: Vec<&[usize]> = chosen.chunks(3).collect();
    let mut beta = DMatrix::zeros(p, q);
    for l in 0..q {
        let triple = triples[rng.random_range(0..3)];
        for &row in triple {
            beta[(row, l)] = if rng.random_bool(0.5) { 2.0 } else { -2.0 };
        }
        let mut others: Vec<usize> = (0..p).filter(|r| !triple.contains(r)).collect();
        others.shuffle(&mut rng);
        for &row in &others[..3] {
            beta[(row, l)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    Ok(beta)
}

fn support_of(beta: &DMatrix<f64>) -> DMatrix<bool> {
    beta.map(|v| v.abs() > ZERO_TOL)
}

/// Truth for a design: `β*` from the seed plus the predictor covariances.
pub fn make_truth(config: &SimConfig) -> Result<SimTruth> {
    config.validate()?;
    let beta_star = gen_beta_star(config.p, config.q, mix_seed(config.seed, 1))?;
    Ok(truth_with_beta(config, beta_star))
}

/// Truth for a design with a given `β*`.
pub fn truth_with_beta(config: &SimConfig, beta_star: DMatrix<f64>) -> SimTruth {
    let ar = linalg::ar1_covariance(config.p, config.ar_rho);
    let (sigma_x, sigma_z) = match config.model {
        SimModel::One => (ar, None),
        SimModel::Two => {
            let p = config.p;
            (&ar + DMatrix::identity(p, p) * config.sigma_u_sq, Some(ar))
        }
    };
    SimTruth {
        support: support_of(&beta_star),
        beta_star,
        sigma_x,
        sigma_z,
    }
}

/// `n x d` draws from `N(0, Σ)` using the symmetric square root of `Σ`.
pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    let standard = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    standard * linalg::sym_sqrt(sigma)
}

fn check_truth(config: &SimConfig, truth: &SimTruth) -> Result<()> {
    config.validate()?;
    check_shape("true coefficients", (config.p, config.q), truth.beta_star.shape())
}

/// First model: `X ~ N(0, Σ_X)`, `Y = Xβ* + E` with error covariance
/// `σ²_u β*'β* + γ²I`.
pub fn gen_model1(config: &SimConfig, truth: &SimTruth) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_truth(config, truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 2));
    let sigma_x = linalg::ar1_covariance(config.p, config.ar_rho);
    let x = gaussian_rows(&mut rng, config.n, &sigma_x);
    let q = config.q;
    let error_cov = truth.beta_star.tr_mul(&truth.beta_star) * config.sigma_u_sq
        + DMatrix::identity(q, q) * config.gamma_sq;
    let e = gaussian_rows(&mut rng, config.n, &error_cov);
    let y = &x * &truth.beta_star + e;
    Ok((x, y))
}

/// Second model: `Z ~ N(0, Σ_Z)`, `X = Z + U`, `Y = Zβ* + ε`.
pub fn gen_model2(
    config: &SimConfig,
    truth: &SimTruth,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_truth(config, truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 3));
    let (n, p, q) = (config.n, config.p, config.q);
    let sigma_z = linalg::ar1_covariance(p, config.ar_rho);
    let z = gaussian_rows(&mut rng, n, &sigma_z);
    let noise_sd = config.sigma_u_sq.sqrt();
    let x = if config.sigma_u_sq == 0.0 {
        z.clone()
    } else {
        let u = DMatrix::from_fn(n, p, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
        &z + u
    };
    let eps_sd = config.gamma_sq.sqrt();
    let eps = DMatrix::from_fn(n, q, |_, _| eps_sd * rng.sample::<f64, _>(StandardNormal));
    let y = &z * &truth.beta_star + eps;
    Ok((x, y, z))
}

/// Draws `(X, Y)` from the configured model.
pub fn generate(config: &SimConfig, truth: &SimTruth) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match config.model {
        SimModel::One => gen_model1(config, truth),
        SimModel::Two => gen_model2(config, truth).map(|(x, y, _)| (x, y)),
    }
}

fn weighted_error(beta_hat: &DMatrix<f64>, truth: &SimTruth, sigma: &DMatrix<f64>) -> Result<f64> {
    check_shape("estimate", truth.beta_star.shape(), beta_hat.shape())?;
    let diff = beta_hat - &truth.beta_star;
    // ‖Σ^{1/2}Δ‖²_F = tr(Δ'ΣΔ)
    Ok(linalg::frob_dot(&diff, &(sigma * &diff)).max(0.0))
}

/// `‖Σ_X^{1/2}(β̂ - β*)‖²_F`.
pub fn model_error_observed(beta_hat: &DMatrix<f64>, truth: &SimTruth) -> Result<f64> {
    weighted_error(beta_hat, truth, &truth.sigma_x)
}

/// `‖Σ_Z^{1/2}(β̂ - β*)‖²_F`; only defined for the latent-predictor model.
pub fn model_error_latent(beta_hat: &DMatrix<f64>, truth: &SimTruth) -> Result<f64> {
    let sigma_z = truth.sigma_z.as_ref().ok_or_else(|| {
        Error::InvalidParameter("latent model error needs a latent covariance".into())
    })?;
    weighted_error(beta_hat, truth, sigma_z)
}

/// `‖β̂ - β*‖²_F`.
pub fn frobenius_error(beta_hat: &DMatrix<f64>, truth: &SimTruth) -> Result<f64> {
    check_shape("estimate", truth.beta_star.shape(), beta_hat.shape())?;
    Ok((beta_hat - &truth.beta_star).norm_squared())
}

/// `‖Y_T - 1μ̂' - X_Tβ̂‖²_F / (q n_T)`.
pub fn prediction_error(
    beta_hat: &DMatrix<f64>,
    mu_hat: &nalgebra::DVector<f64>,
    test_x: &DMatrix<f64>,
    test_y: &DMatrix<f64>,
) -> Result<f64> {
    let (n_t, q) = test_y.shape();
    check_shape("test predictors", (n_t, beta_hat.nrows()), test_x.shape())?;
    check_shape("estimate", (test_x.ncols(), q), beta_hat.shape())?;
    if mu_hat.len() != q {
        return Err(Error::DimensionMismatch {
            context: "intercept",
            expected: q.to_string(),
            found: mu_hat.len().to_string(),
        });
    }
    let mut resid = test_y - test_x * beta_hat;
    for mut row in resid.row_iter_mut() {
        row -= mu_hat.transpose();
    }
    Ok(resid.norm_squared() / (q * n_t) as f64)
}

/// True and false positive rates of the estimated support.
pub fn tpr_fpr(beta_hat: &DMatrix<f64>, truth: &SimTruth, zero_tol: f64) -> Result<(f64, f64)> {
    check_shape("estimate", truth.support.shape(), beta_hat.shape())?;
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (est, actual) in beta_hat.iter().zip(truth.support.iter()) {
        let selected = est.abs() > zero_tol;
        if *actual {
            pos += 1;
            tp += selected as usize;
        } else {
            neg += 1;
            fp += selected as usize;
        }
    }
    let rate = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    Ok((rate(tp, pos), rate(fp, neg)))
}

/// Estimators compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// The linked weighted criterion with L1 penalty and `(τ, λ)` by CV.
    Mc,
    Lasso1,
    LassoQ,
    /// Two-step fixed-weight approximation.
    Ca,
    Coco1,
    CocoQ,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mc,
        Method::Lasso1,
        Method::LassoQ,
        Method::Ca,
        Method::Coco1,
        Method::CocoQ,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Mc => "MC",
            Method::Lasso1 => "Lasso-1",
            Method::LassoQ => "Lasso-q",
            Method::Ca => "CA",
            Method::Coco1 => "CoCo-1",
            Method::CocoQ => "CoCo-q",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    ModelErrorObserved,
    ModelErrorLatent,
    FrobeniusError,
    PredictionError,
    TruePositiveRate,
    FalsePositiveRate,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::ModelErrorObserved,
        Metric::ModelErrorLatent,
        Metric::FrobeniusError,
        Metric::PredictionError,
        Metric::TruePositiveRate,
        Metric::FalsePositiveRate,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::ModelErrorObserved => "ME_O",
            Metric::ModelErrorLatent => "ME_L",
            Metric::FrobeniusError => "FNE",
            Metric::PredictionError => "PE",
            Metric::TruePositiveRate => "TPR",
            Metric::FalsePositiveRate => "FPR",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Benchmark settings. Full-scale runs use `p = 200`, `q = 50`, 100
/// replications; the defaults are a reduced desk-scale design.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub model: SimModel,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub gamma_sq: f64,
    pub sigma_u_values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub n_test: usize,
    pub folds: usize,
    pub num_lambdas: usize,
    pub delta: f64,
    pub taus: Vec<f64>,
    /// Parallel replications; `1` runs sequentially.
    pub jobs: usize,
    pub solver: FitConfig,
}

impl BenchmarkConfig {
    pub fn desk_scale(model: SimModel) -> Self {
        BenchmarkConfig {
            model,
            n: 100,
            p: 50,
            q: 10,
            gamma_sq: DEFAULT_GAMMA_SQ,
            sigma_u_values: DEFAULT_SIGMA_U_VALUES.to_vec(),
            replications: 20,
            seed: 0,
            methods: Method::ALL.to_vec(),
            n_test: DEFAULT_TEST_SIZE,
            folds: tuning::DEFAULT_FOLDS,
            num_lambdas: tuning::DEFAULT_NUM_LAMBDAS,
            delta: tuning::DEFAULT_DELTA,
            taus: tuning::default_taus(),
            jobs: 1,
            solver: FitConfig::new(1.0, 0.0),
        }
    }
}

/// One flat output row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub replication: usize,
    pub model: SimModel,
    pub sigma_u_sq: f64,
    pub method: Method,
    pub metric: Metric,
    pub value: f64,
}

/// A method that failed on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodFailure {
    pub replication: usize,
    pub sigma_u_sq: f64,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkResult {
    pub records: Vec<BenchmarkRecord>,
    pub failures: Vec<MethodFailure>,
}

impl BenchmarkResult {
    pub fn values(&self, method: Method, sigma_u_sq: f64, metric: Metric) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.sigma_u_sq == sigma_u_sq && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn median(&self, method: Method, sigma_u_sq: f64, metric: Metric) -> Option<f64> {
        let v = self.values(method, sigma_u_sq, metric);
        quantile(&v, 0.5)
    }
}

/// Linear-interpolation quantile (type 7); `None` for empty input.
pub fn quantile(values: &[f64], prob: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Fitted coefficients and intercept from one method.
pub fn fit_method(
    method: Method,
    data: &RegressionData,
    sigma_u_sq: f64,
    config: &BenchmarkConfig,
    cv_seed: u64,
) -> Result<(DMatrix<f64>, nalgebra::DVector<f64>)> {
    let options = CompetitorOptions {
        folds: config.folds,
        seed: cv_seed,
        jobs: 1,
        num_lambdas: config.num_lambdas,
        delta: config.delta,
        taus: config.taus.clone(),
        solver: config.solver.clone(),
    };
    let model = match method {
        Method::Mc => {
            let grid = tuning::build_grid(
                data,
                &PenaltySpec::L1,
                config.num_lambdas,
                config.delta,
                Some(config.taus.clone()),
            )?;
            let cv = CvOptions {
                folds: config.folds,
                seed: cv_seed,
                jobs: 1,
                solver: config.solver.clone(),
            };
            tuning::fit_cv(data, &PenaltySpec::L1, &grid, &cv)?.0
        }
        Method::Lasso1 => competitors::lasso_fit(data, LambdaMode::Shared, &options)?.model,
        Method::LassoQ => competitors::lasso_fit(data, LambdaMode::PerResponse, &options)?.model,
        Method::Ca => competitors::ca_fit(data, &PenaltySpec::L1, &options)?.model,
        Method::Coco1 => {
            competitors::coco_fit(data, sigma_u_sq, LambdaMode::Shared, &options)?.model
        }
        Method::CocoQ => {
            competitors::coco_fit(data, sigma_u_sq, LambdaMode::PerResponse, &options)?.model
        }
    };
    Ok((model.beta_hat, model.mu_hat))
}

fn run_unit(
    config: &BenchmarkConfig,
    setting: usize,
    sigma_u_sq: f64,
    replication: usize,
) -> Result<BenchmarkResult> {
    let rep_seed = mix_seed(config.seed, replication as u64);
    let unit_seed = mix_seed(rep_seed, 1000 + setting as u64);
    let mut sim = SimConfig::new(config.model, config.n, config.p, config.q, sigma_u_sq, unit_seed);
    sim.gamma_sq = config.gamma_sq;
    // β* is shared across noise levels within a replication
    let beta_star = gen_beta_star(config.p, config.q, mix_seed(rep_seed, 1))?;
    let truth = truth_with_beta(&sim, beta_star);
    let (x, y) = generate(&sim, &truth)?;
    let test_sim = SimConfig {
        n: config.n_test,
        seed: mix_seed(unit_seed, 7),
        ..sim.clone()
    };
    let (test_x, test_y) = generate(&test_sim, &truth)?;
    let data = center_data(&x, &y, None, None)?;
    let cv_seed = mix_seed(unit_seed, 11);

    let mut out = BenchmarkResult::default();
    for &method in &config.methods {
        let fitted = fit_method(method, &data, sigma_u_sq, config, cv_seed).and_then(
            |(beta, mu)| {
                let mut values = vec![(
                    Metric::ModelErrorObserved,
                    model_error_observed(&beta, &truth)?,
                )];
                if truth.sigma_z.is_some() {
                    values.push((Metric::ModelErrorLatent, model_error_latent(&beta, &truth)?));
                }
                values.push((Metric::FrobeniusError, frobenius_error(&beta, &truth)?));
                values.push((
                    Metric::PredictionError,
                    prediction_error(&beta, &mu, &test_x, &test_y)?,
                ));
                let (tpr, fpr) = tpr_fpr(&beta, &truth, ZERO_TOL)?;
                values.push((Metric::TruePositiveRate, tpr));
                values.push((Metric::FalsePositiveRate, fpr));
                Ok(values)
            },
        );
        match fitted {
            Ok(values) => out.records.extend(values.into_iter().map(|(metric, value)| {
                BenchmarkRecord {
                    replication,
                    model: config.model,
                    sigma_u_sq,
                    method,
                    metric,
                    value,
                }
            })),
            Err(e) => out.failures.push(MethodFailure {
                replication,
                sigma_u_sq,
                method,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Runs every method on every `(σ²_u, replication)` pair. Output order is
/// fixed (noise level, replication, method, metric) regardless of `jobs`.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkResult> {
    if config.replications == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let units: Vec<(usize, f64, usize)> = config
        .sigma_u_values
        .iter()
        .enumerate()
        .flat_map(|(s, &sigma)| (0..config.replications).map(move |r| (s, sigma, r)))
        .collect();
    let run = |&(s, sigma, r): &(usize, f64, usize)| run_unit(config, s, sigma, r);
    let results: Vec<Result<BenchmarkResult>> = if config.jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build() {
            Ok(pool) => pool.install(|| units.par_iter().map(run).collect()),
            Err(_) => units.iter().map(run).collect(),
        }
    } else {
        units.iter().map(run).collect()
    };
    let mut out = BenchmarkResult::default();
    for r in results {
        let r = r?;
        out.records.extend(r.records);
        out.failures.extend(r.failures);
    }
    Ok(out)
}
