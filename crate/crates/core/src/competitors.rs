//! Baseline estimators: L1-penalized least squares with one shared or
//! per-response tuning parameters, the two-step fixed-weight approximation,
//! and the measurement-error corrected lasso with a known noise variance.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::data::{FitConfig, FittedModel, PenaltySpec, RegressionData};
use crate::error::{Error, Result};
use crate::linalg;
use crate::loss::{weight_inverse, WeightedQuadratic};
use crate::solver::{self, LossKind};
use crate::tuning::{self, CVResult, TuningGrid};

/// Whether one `λ` is shared by all responses or chosen per response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    Shared,
    PerResponse,
}

/// Settings shared by the baseline fits.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitorOptions {
    pub folds: usize,
    pub seed: u64,
    pub jobs: usize,
    pub num_lambdas: usize,
    pub delta: f64,
    /// `τ` candidates for the two-step approximation.
    pub taus: Vec<f64>,
    pub solver: FitConfig,
}

impl Default for CompetitorOptions {
    fn default() -> Self {
        CompetitorOptions {
            folds: tuning::DEFAULT_FOLDS,
            seed: 0,
            jobs: 1,
            num_lambdas: tuning::DEFAULT_NUM_LAMBDAS,
            delta: tuning::DEFAULT_DELTA,
            taus: tuning::default_taus(),
            solver: FitConfig::new(1.0, 0.0),
        }
    }
}

/// A baseline fit with the tuning parameter used for each response.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitorFit {
    pub model: FittedModel,
    pub column_lambdas: Vec<f64>,
}

fn identity_weight(q: usize) -> LossKind {
    LossKind::FixedWeight(DMatrix::identity(q, q))
}

/// `n⁻¹‖Y - Xβ‖²_F + λ Pen(β)` along a descending `λ` path.
pub fn lasso_path(
    data: &RegressionData,
    penalty: &PenaltySpec,
    lambdas: &[f64],
    solver_config: &FitConfig,
) -> Result<Vec<FittedModel>> {
    // unit weight with τ = 1 leaves the penalty level at λ
    tuning::solution_path_with(data, penalty, 1.0, lambdas, solver_config, &identity_weight(data.q()))
}

/// Weights `w_k = λ_max,k / λ_max` so that a shared geometric `λ` grid maps
/// to a separate geometric grid per response.
fn column_scaled_penalty(g: &DMatrix<f64>) -> (PenaltySpec, f64) {
    let per_column: Vec<f64> = g.column_iter().map(|c| c.amax()).collect();
    let overall = per_column.iter().cloned().fold(0.0, f64::max);
    let weights = per_column
        .iter()
        .map(|&c| if c > 0.0 && overall > 0.0 { c / overall } else { 1.0 })
        .collect();
    (
        PenaltySpec::WeightedL1 {
            column_weights: weights,
        },
        overall,
    )
}

/// Per column, the `λ` index with the smallest error (ties toward larger `λ`).
fn per_column_argmin(errors: &DMatrix<f64>) -> Vec<usize> {
    (0..errors.ncols())
        .map(|j| {
            let mut best = 0;
            for l in 1..errors.nrows() {
                if errors[(l, j)] < errors[(best, j)] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// Assembles a coefficient matrix taking column `j` from `path[index[j]]`.
fn assemble_columns(path: &[DMatrix<f64>], index: &[usize]) -> DMatrix<f64> {
    let (p, q) = path[0].shape();
    let mut out = DMatrix::zeros(p, q);
    for (j, &m) in index.iter().enumerate() {
        out.set_column(j, &path[m].column(j));
    }
    out
}

fn zero_fit(data: &RegressionData, q: usize) -> CompetitorFit {
    CompetitorFit {
        model: FittedModel::from_coefficients(data, DMatrix::zeros(data.p(), q), None, 1.0, 0.0),
        column_lambdas: vec![0.0; q],
    }
}

/// L1-penalized least squares with cross-validated `λ`.
///
/// `Shared` picks one `λ` minimizing the error summed over responses;
/// `PerResponse` picks `λ_j` for each response from its own error.
pub fn lasso_fit(
    data: &RegressionData,
    mode: LambdaMode,
    options: &CompetitorOptions,
) -> Result<CompetitorFit> {
    if data.mask().is_some() {
        return Err(Error::Unsupported("lasso baselines with missing responses".into()));
    }
    let g = data.x().tr_mul(data.y()) * (2.0 / data.n() as f64);
    let (penalty, lambda_max) = match mode {
        LambdaMode::Shared => (PenaltySpec::L1, linalg::max_abs(&g)),
        LambdaMode::PerResponse => column_scaled_penalty(&g),
    };
    if lambda_max == 0.0 {
        return Ok(zero_fit(data, data.q()));
    }
    let lambdas = tuning::lambda_sequence(lambda_max, options.num_lambdas, options.delta)?;
    let grid = TuningGrid::shared(vec![1.0], lambdas.clone(), options.delta);
    let folds = tuning::fold_assignment(data.n(), options.folds, options.seed)?;
    let cv = tuning::cross_validate_with(data, &grid, &folds, options.jobs, |train, _, _, l| {
        Ok(lasso_path(train, &penalty, l, &options.solver)?
            .into_iter()
            .map(|m| (m.beta_hat, None))
            .collect())
    })?;
    select_and_refit(data, &penalty, mode, &lambdas, &cv.column_errors[0], &options.solver)
}

fn select_and_refit(
    data: &RegressionData,
    penalty: &PenaltySpec,
    mode: LambdaMode,
    lambdas: &[f64],
    column_errors: &DMatrix<f64>,
    solver_config: &FitConfig,
) -> Result<CompetitorFit> {
    let q = data.q();
    let index = match mode {
        LambdaMode::Shared => {
            let totals = DMatrix::from_fn(lambdas.len(), 1, |l, _| column_errors.row(l).sum());
            vec![per_column_argmin(&totals)[0]; q]
        }
        LambdaMode::PerResponse => per_column_argmin(column_errors),
    };
    let last = *index.iter().max().unwrap_or(&0);
    let path = lasso_path(data, penalty, &lambdas[..=last], solver_config)?;
    let betas: Vec<DMatrix<f64>> = path.iter().map(|m| m.beta_hat.clone()).collect();
    let beta = assemble_columns(&betas, &index);
    let weights: Vec<f64> = match penalty {
        PenaltySpec::WeightedL1 { column_weights } => column_weights.clone(),
        _ => vec![1.0; q],
    };
    let column_lambdas: Vec<f64> = index
        .iter()
        .zip(&weights)
        .map(|(&m, w)| lambdas[m] * w)
        .collect();
    let shared_lambda = lambdas[index.first().copied().unwrap_or(0)];
    let mut model = FittedModel::from_coefficients(data, beta, None, 1.0, shared_lambda);
    let chosen = &path[last];
    model.converged = path.iter().all(|m| m.converged);
    model.iterations = chosen.iterations;
    model.objective_trace = chosen.objective_trace.clone();
    Ok(CompetitorFit {
        model,
        column_lambdas,
    })
}

/// Two-step approximation: a per-response lasso gives `β̃`, then
/// `tr{n⁻¹(Y - Xβ)'(Y - Xβ)(β̃'β̃ + τI)⁻¹} + (λ/τ)Pen(β)` is minimized with
/// `(τ, λ)` chosen by cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepFit {
    pub model: FittedModel,
    pub initial: DMatrix<f64>,
    pub cv: CVResult,
}

/// Fixed-weight `λ_max(τ) = τ · λ_max(2n⁻¹X'Y(β̃'β̃ + τI)⁻¹)`.
fn fixed_weight_lambda_max(
    data: &RegressionData,
    penalty: &PenaltySpec,
    weight: &DMatrix<f64>,
    tau: f64,
) -> f64 {
    let g = data.x().tr_mul(data.y()) * weight * (2.0 / data.n() as f64);
    tau * tuning::lambda_max_from_gradient(&g, penalty)
}

pub fn ca_fit(
    data: &RegressionData,
    penalty: &PenaltySpec,
    options: &CompetitorOptions,
) -> Result<TwoStepFit> {
    let initial = lasso_fit(data, LambdaMode::PerResponse, options)?.model.beta_hat;
    ca_fit_from(data, penalty, &initial, options)
}

/// [`ca_fit`] with a supplied first-step estimate.
pub fn ca_fit_from(
    data: &RegressionData,
    penalty: &PenaltySpec,
    initial: &DMatrix<f64>,
    options: &CompetitorOptions,
) -> Result<TwoStepFit> {
    let weights: Vec<DMatrix<f64>> = options
        .taus
        .iter()
        .map(|&tau| weight_inverse(initial, tau).map(|w| w.omega_inv))
        .collect::<Result<_>>()?;
    let lambdas_per_tau: Vec<Vec<f64>> = options
        .taus
        .iter()
        .zip(&weights)
        .map(|(&tau, w)| {
            let lmax = fixed_weight_lambda_max(data, penalty, w, tau);
            tuning::lambda_sequence(lmax, options.num_lambdas, options.delta)
        })
        .collect::<Result<_>>()?;
    let grid = TuningGrid {
        taus: options.taus.clone(),
        lambdas_per_tau,
        num_lambdas: options.num_lambdas,
        delta: options.delta,
    };
    let folds = tuning::fold_assignment(data.n(), options.folds, options.seed)?;
    let cv = tuning::cross_validate_with(data, &grid, &folds, options.jobs, |train, t, tau, l| {
        let kind = LossKind::FixedWeight(weights[t].clone());
        Ok(
            tuning::solution_path_with(train, penalty, tau, l, &options.solver, &kind)?
                .into_iter()
                .map(|m| (m.beta_hat, m.eta_hat))
                .collect(),
        )
    })?;
    let (ti, li) = cv.best_index;
    let kind = LossKind::FixedWeight(weights[ti].clone());
    let mut path = tuning::solution_path_with(
        data,
        penalty,
        cv.best_tau,
        &grid.lambdas_per_tau[ti][..=li],
        &options.solver,
        &kind,
    )?;
    let model = path.pop().ok_or(Error::Degenerate("empty path".into()))?;
    Ok(TwoStepFit {
        model,
        initial: initial.clone(),
        cv,
    })
}

/// Fixed-weight loss gradient `2n⁻¹(X'Xβ - X'Y)W`.
pub fn fixed_weight_gradient(
    data: &RegressionData,
    beta: &DMatrix<f64>,
    weight: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = data.n() as f64;
    (data.x().tr_mul(&(data.x() * beta)) - data.x().tr_mul(data.y())) * weight * (2.0 / n)
}

pub const COCO_DEFAULT_TOL: f64 = 1e-6;
pub const COCO_MAX_ITER: usize = 5000;

/// Euclidean projection onto `{a : Σ|a_i| ≤ radius}`.
fn project_l1_ball(a: &DMatrix<f64>, radius: f64) -> DMatrix<f64> {
    let total: f64 = a.iter().map(|v| v.abs()).sum();
    if total <= radius {
        return a.clone();
    }
    let mut mags: Vec<f64> = a.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (i + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    a.map(|v| v.signum() * (v.abs() - theta).max(0.0))
}

/// Nearest PSD matrix to `s_tilde` in the entrywise max norm.
///
/// Alternating-direction scheme on `min ‖R‖_max s.t. R = S - S̃, S ⪰ 0`:
/// the `S` update projects onto the PSD cone, the `R` update is the
/// max-norm proximal map (computed through an L1-ball projection). The best
/// PSD iterate is returned, and never one worse than eigenvalue clipping.
pub fn coco_project(s_tilde: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    coco_project_with(s_tilde, tol, COCO_MAX_ITER)
}

pub fn coco_project_with(s_tilde: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    let p = s_tilde.nrows();
    if s_tilde.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "corrected gram",
            expected: format!("{p}x{p}"),
            found: format!("{}x{}", p, s_tilde.ncols()),
        });
    }
    if !linalg::is_finite(s_tilde) {
        return Err(Error::NonFinite("corrected gram"));
    }
    let s_tilde = linalg::symmetrize(s_tilde);
    let eig = SymmetricEigen::new(s_tilde.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(s_tilde);
    }
    let distance = |s: &DMatrix<f64>| linalg::max_abs(&(&s_tilde - s));

    let clipped = linalg::clip_psd(&s_tilde);
    let mut best = clipped.clone();
    let mut best_distance = distance(&clipped);

    let scale = linalg::max_abs(&s_tilde).max(f64::MIN_POSITIVE);
    let tol = tol * scale.max(1.0);
    let mu = scale;
    let mut r = &clipped - &s_tilde;
    let mut dual = DMatrix::zeros(p, p);
    let mut previous = best_distance;
    for _ in 0..max_iter {
        let s = linalg::clip_psd(&(&s_tilde + &r - &dual * mu));
        let a = &s - &s_tilde + &dual * mu;
        r = &a - project_l1_ball(&a, mu);
        let residual = &r - &s + &s_tilde;
        dual -= &residual / mu;

        let d = distance(&s);
        if d < best_distance {
            best_distance = d;
            best = s;
        }
        if (d - previous).abs() < tol && linalg::max_abs(&residual) < tol {
            return Ok(best);
        }
        previous = d;
    }
    Ok(best)
}

/// Measurement-error corrected quantities for one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct CocoInputs {
    pub sigma_u_sq: f64,
    /// Nearest PSD matrix to `n⁻¹X'X - σ²_u I` in max norm.
    pub sigma_tilde: DMatrix<f64>,
    /// `√n Σ̃^{1/2}`, so that `n⁻¹W'W = Σ̃`.
    pub w: DMatrix<f64>,
    /// `n⁻¹X'Y`.
    pub rho: DMatrix<f64>,
    /// `W⁺X'Y`.
    pub y_tilde: DMatrix<f64>,
    pub n: usize,
}

impl CocoInputs {
    pub fn new(data: &RegressionData, sigma_u_sq: f64, tol: f64) -> Result<CocoInputs> {
        let (x, y) = (data.x(), data.y());
        Self::from_parts(x, y, sigma_u_sq, tol)
    }

    fn from_parts(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma_u_sq: f64, tol: f64) -> Result<Self> {
        if !(sigma_u_sq >= 0.0 && sigma_u_sq.is_finite()) {
            return Err(Error::InvalidParameter("noise variance must be nonnegative".into()));
        }
        let n = x.nrows();
        let nf = n as f64;
        let p = x.ncols();
        let s = x.tr_mul(x) / nf - DMatrix::identity(p, p) * sigma_u_sq;
        let sigma_tilde = coco_project(&s, tol)?;
        if linalg::max_abs(&sigma_tilde) == 0.0 {
            return Err(Error::Degenerate("corrected gram matrix is zero".into()));
        }
        let eig = SymmetricEigen::new(sigma_tilde.clone());
        let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
        let cut = top * 1e-12;
        let root = eig.eigenvalues.map(|l| if l > cut { l.sqrt() } else { 0.0 });
        let root_inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l.sqrt() } else { 0.0 });
        let vecs = &eig.eigenvectors;
        let w = linalg::symmetrize(&(vecs * DMatrix::from_diagonal(&root) * vecs.transpose()))
            * nf.sqrt();
        let w_pinv =
            linalg::symmetrize(&(vecs * DMatrix::from_diagonal(&root_inv) * vecs.transpose()))
                / nf.sqrt();
        let xty = x.tr_mul(y);
        Ok(CocoInputs {
            sigma_u_sq,
            rho: &xty / nf,
            y_tilde: w_pinv * xty,
            sigma_tilde,
            w,
            n,
        })
    }

    /// `tr(β'Σ̃β - 2β'ρ)`.
    pub fn corrected_objective(&self, beta: &DMatrix<f64>) -> f64 {
        let quad = beta.tr_mul(&(&self.sigma_tilde * beta)).trace();
        quad - 2.0 * linalg::frob_dot(beta, &self.rho)
    }

    /// `n⁻¹‖Ỹ - Wβ‖²_F`.
    pub fn least_squares_objective(&self, beta: &DMatrix<f64>) -> f64 {
        (&self.y_tilde - &self.w * beta).norm_squared() / self.n as f64
    }

    /// Least squares form as a solver loss. Unlike the corrected form it stays
    /// bounded below when `Σ̃` is singular.
    pub fn loss(&self) -> Result<WeightedQuadratic> {
        let nf = self.n as f64;
        let q = self.rho.ncols();
        WeightedQuadratic::new(
            self.w.tr_mul(&self.w) / nf,
            self.w.tr_mul(&self.y_tilde) / nf,
            self.y_tilde.norm_squared() / nf,
            DMatrix::identity(q, q),
        )
    }

    /// `2n⁻¹W'Ỹ`, the negative gradient at zero.
    fn gradient_at_zero(&self) -> DMatrix<f64> {
        self.w.tr_mul(&self.y_tilde) * (2.0 / self.n as f64)
    }
}

pub fn coco_path(
    inputs: &CocoInputs,
    penalty: &PenaltySpec,
    lambdas: &[f64],
    solver_config: &FitConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let loss = inputs.loss()?;
    let mut init = DMatrix::zeros(inputs.rho.nrows(), inputs.rho.ncols());
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = FitConfig {
            tau: 1.0,
            lambda,
            ..solver_config.clone()
        };
        let outcome = solver::minimize(&loss, penalty, lambda, &cfg, &init, None)?;
        init = outcome.beta.clone();
        out.push(outcome.beta);
    }
    Ok(out)
}

/// Corrected lasso with known `σ²_u`.
///
/// Cross-validation error for a held-out fold is the corrected objective
/// `β_j'Σ̃_vβ_j - 2β_j'ρ_vj` built from the held-out fold's own corrected
/// Gram matrix and cross products (centered by training means).
pub fn coco_fit(
    data: &RegressionData,
    sigma_u_sq: f64,
    mode: LambdaMode,
    options: &CompetitorOptions,
) -> Result<CompetitorFit> {
    if data.mask().is_some() || data.covariates().is_some() {
        return Err(Error::Unsupported(
            "corrected lasso with missing responses or covariates".into(),
        ));
    }
    let inputs = CocoInputs::new(data, sigma_u_sq, COCO_DEFAULT_TOL)?;
    let g = inputs.gradient_at_zero();
    let (penalty, lambda_max) = match mode {
        LambdaMode::Shared => (PenaltySpec::L1, linalg::max_abs(&g)),
        LambdaMode::PerResponse => column_scaled_penalty(&g),
    };
    let q = data.q();
    if lambda_max == 0.0 {
        return Ok(zero_fit(data, q));
    }
    let lambdas = tuning::lambda_sequence(lambda_max, options.num_lambdas, options.delta)?;
    let folds = tuning::fold_assignment(data.n(), options.folds, options.seed)?;
    let n = data.n();
    let p = data.p();

    let fold_errors = |fold: &Vec<usize>| -> Result<DMatrix<f64>> {
        let train = data.subset(&tuning::complement(n, fold))?;
        let held = data.subset_centered_by(fold, &train);
        let train_inputs = CocoInputs::new(&train, sigma_u_sq, COCO_DEFAULT_TOL)?;
        let path = coco_path(&train_inputs, &penalty, &lambdas, &options.solver)?;
        let nv = held.x.nrows() as f64;
        let s_held = held.x.tr_mul(&held.x) / nv - DMatrix::identity(p, p) * sigma_u_sq;
        let sigma_held = coco_project(&s_held, COCO_DEFAULT_TOL)?;
        let rho_held = held.x.tr_mul(&held.y) / nv;
        let mut errors = DMatrix::zeros(lambdas.len(), q);
        for (l, beta) in path.iter().enumerate() {
            let sb = &sigma_held * beta;
            for j in 0..q {
                let bj = beta.column(j);
                errors[(l, j)] = bj.dot(&sb.column(j)) - 2.0 * bj.dot(&rho_held.column(j));
            }
        }
        Ok(errors)
    };
    let per_fold: Vec<Result<DMatrix<f64>>> = if options.jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build() {
            Ok(pool) => pool.install(|| folds.par_iter().map(fold_errors).collect()),
            Err(_) => folds.iter().map(fold_errors).collect(),
        }
    } else {
        folds.iter().map(fold_errors).collect()
    };
    let mut total = DMatrix::zeros(lambdas.len(), q);
    for e in per_fold {
        total += e?;
    }

    let index = match mode {
        LambdaMode::Shared => {
            let sums = DMatrix::from_fn(lambdas.len(), 1, |l, _| total.row(l).sum());
            vec![per_column_argmin(&sums)[0]; q]
        }
        LambdaMode::PerResponse => per_column_argmin(&total),
    };
    let last = *index.iter().max().unwrap_or(&0);
    let path = coco_path(&inputs, &penalty, &lambdas[..=last], &options.solver)?;
    let beta = assemble_columns(&path, &index);
    let weights: Vec<f64> = match &penalty {
        PenaltySpec::WeightedL1 { column_weights } => column_weights.clone(),
        _ => vec![1.0; q],
    };
    let column_lambdas = index.iter().zip(&weights).map(|(&m, w)| lambdas[m] * w).collect();
    let model = FittedModel::from_coefficients(data, beta, None, 1.0, lambdas[index[0]]);
    Ok(CompetitorFit {
        model,
        column_lambdas,
    })
}

/// Corrected objective and least squares objective at each probe `β`; the
/// two differ by `n⁻¹‖Ỹ‖²` when `Σ̃` is nonsingular.
pub fn coco_objective_pair(inputs: &CocoInputs, beta: &DMatrix<f64>) -> (f64, f64) {
    (
        inputs.corrected_objective(beta),
        inputs.least_squares_objective(beta),
    )
}

/// `Σ̃⁻¹ρ`, the unpenalized corrected solution for nonsingular `Σ̃`.
pub fn coco_unpenalized(inputs: &CocoInputs) -> Result<DMatrix<f64>> {
    inputs
        .sigma_tilde
        .clone()
        .cholesky()
        .map(|c| c.solve(&inputs.rho))
        .ok_or(Error::Degenerate("corrected gram matrix is singular".into()))
}
