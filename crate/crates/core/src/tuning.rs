//! Tuning grids, warm-started solution paths and V-fold cross-validation
//! over `(τ, λ)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjustments;
use crate::data::{FitConfig, FittedModel, PenaltySpec, RegressionData};
use crate::error::{Error, Result};
use crate::solver::{self, LossKind};

/// `τ ∈ {10⁴, 10³, …, 10⁻⁴}`.
pub fn default_taus() -> Vec<f64> {
    (-4..=4).rev().map(|e| 10f64.powi(e)).collect()
}

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_NUM_LAMBDAS: usize = 20;
pub const DEFAULT_FOLDS: usize = 5;

/// Candidate `τ` values, each with its own descending `λ` sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub taus: Vec<f64>,
    pub lambdas_per_tau: Vec<Vec<f64>>,
    pub num_lambdas: usize,
    pub delta: f64,
}

impl TuningGrid {
    /// Same `λ` sequence for every `τ`.
    pub fn shared(taus: Vec<f64>, lambdas: Vec<f64>, delta: f64) -> TuningGrid {
        let num_lambdas = lambdas.len();
        TuningGrid {
            lambdas_per_tau: vec![lambdas; taus.len()],
            taus,
            num_lambdas,
            delta,
        }
    }
}

/// `λ_m = λ_max^{(M-m)/(M-1)} λ_min^{(m-1)/(M-1)}` with `λ_min = δ λ_max`.
pub fn lambda_sequence(lambda_max: f64, num: usize, delta: f64) -> Result<Vec<f64>> {
    if num < 2 {
        return Err(Error::InvalidParameter("need at least two lambda values".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Degenerate(
            "largest useful lambda is zero; responses are orthogonal to predictors".into(),
        ));
    }
    let lambda_min = delta * lambda_max;
    let denom = (num - 1) as f64;
    Ok((1..=num)
        .map(|m| {
            let m = m as f64;
            lambda_max.powf((num as f64 - m) / denom) * lambda_min.powf((m - 1.0) / denom)
        })
        .collect())
}

/// `2n⁻¹X'Y` on the data the solver actually sees (projected when covariates
/// are present, zero-filled at unobserved responses).
fn scaled_cross_product(data: &RegressionData) -> Result<DMatrix<f64>> {
    let projected;
    let d = if data.covariates().is_some() {
        projected = adjustments::project_out_covariates(data)?;
        &projected.data
    } else {
        data
    };
    Ok(d.x().tr_mul(d.y()) * (2.0 / d.n() as f64))
}

/// Smallest `λ` at which the zero matrix satisfies the first-order
/// conditions, for any `τ`.
pub fn lambda_max(data: &RegressionData, penalty: &PenaltySpec) -> Result<f64> {
    let g = scaled_cross_product(data)?;
    penalty.validate(data.q())?;
    Ok(lambda_max_from_gradient(&g, penalty))
}

/// Same as [`lambda_max`] given `G = 2n⁻¹X'Y` (or any gradient magnitude at
/// zero with the matching scale).
pub fn lambda_max_from_gradient(g: &DMatrix<f64>, penalty: &PenaltySpec) -> f64 {
    match penalty {
        PenaltySpec::L1 => crate::linalg::max_abs(g),
        PenaltySpec::WeightedL1 { column_weights } => g
            .column_iter()
            .zip(column_weights)
            .map(|(c, w)| c.amax() / w)
            .fold(0.0, f64::max),
        PenaltySpec::GroupRow => g.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
        PenaltySpec::Nuclear => g.singular_values().iter().cloned().fold(0.0, f64::max),
        PenaltySpec::SparseGroup {
            l1_weight,
            group_weight,
        } => g
            .row_iter()
            .map(|row| {
                let row: Vec<f64> = row.iter().cloned().collect();
                sparse_group_row_threshold(&row, *l1_weight, *group_weight)
            })
            .fold(0.0, f64::max),
    }
}

/// Smallest `λ` with `‖S(g, λa)‖₂ ≤ λb`.
fn sparse_group_row_threshold(g: &[f64], a: f64, b: f64) -> f64 {
    let excess = |lambda: f64| {
        let shrunk: f64 = g
            .iter()
            .map(|v| (v.abs() - lambda * a).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        shrunk - lambda * b
    };
    let amax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if amax == 0.0 {
        return 0.0;
    }
    let mut hi = if a > 0.0 { amax / a } else { norm / b };
    if b > 0.0 {
        hi = hi.min(norm / b);
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Geometric `λ` grid from `λ_max` down to `δλ_max` shared by every `τ`.
pub fn build_grid(
    data: &RegressionData,
    penalty: &PenaltySpec,
    num_lambdas: usize,
    delta: f64,
    taus: Option<Vec<f64>>,
) -> Result<TuningGrid> {
    let taus = taus.unwrap_or_else(default_taus);
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("taus must be positive".into()));
    }
    let lambdas = lambda_sequence(lambda_max(data, penalty)?, num_lambdas, delta)?;
    Ok(TuningGrid::shared(taus, lambdas, delta))
}

fn check_descending(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda sequence".into()));
    }
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("lambdas must be descending".into()));
    }
    Ok(())
}

/// Warm-started fits along a descending `λ` sequence at fixed `τ`, the first
/// starting from zero.
pub fn solution_path(
    data: &RegressionData,
    penalty: &PenaltySpec,
    tau: f64,
    lambdas: &[f64],
    config: &FitConfig,
) -> Result<Vec<FittedModel>> {
    solution_path_with(data, penalty, tau, lambdas, config, &LossKind::for_data(data))
}

/// [`solution_path`] for an explicit loss.
pub fn solution_path_with(
    data: &RegressionData,
    penalty: &PenaltySpec,
    tau: f64,
    lambdas: &[f64],
    config: &FitConfig,
    loss_kind: &LossKind,
) -> Result<Vec<FittedModel>> {
    check_descending(lambdas)?;
    let mut init = DMatrix::zeros(data.p(), data.q());
    let mut path = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let cfg = FitConfig {
            tau,
            lambda,
            ..config.clone()
        };
        let model = solver::solve(data, penalty, &cfg, &init, loss_kind)?;
        init = model.beta_hat.clone();
        path.push(model);
    }
    Ok(path)
}

/// Row indices of each fold: a seeded permutation dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    if n < folds {
        return Err(Error::InvalidParameter(format!(
            "{folds} folds requested for {n} rows; a fold would be empty"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (i, row) in perm.into_iter().enumerate() {
        out[i % folds].push(row);
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

/// Rows not in `fold`.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in fold {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Worker threads; `1` runs sequentially.
    pub jobs: usize,
    /// Solver controls; `tau` and `lambda` are overridden per grid cell.
    pub solver: FitConfig,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: DEFAULT_FOLDS,
            seed: 0,
            jobs: 1,
            solver: FitConfig::new(1.0, 0.0),
        }
    }
}

/// Out-of-fold error for every grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CVResult {
    pub taus: Vec<f64>,
    pub lambdas_per_tau: Vec<Vec<f64>>,
    /// `|taus| x M` summed squared prediction error.
    pub error_surface: DMatrix<f64>,
    /// Per `τ`: `M x q` error by response column, summed over folds.
    pub column_errors: Vec<DMatrix<f64>>,
    /// Per fold: `|taus| x M` error.
    pub fold_errors: Vec<DMatrix<f64>>,
    pub best_tau: f64,
    pub best_lambda: f64,
    /// `(tau index, lambda index)` of the selected cell.
    pub best_index: (usize, usize),
}

/// One trace row: fold, `τ`, `λ` and that fold's error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvRecord {
    pub fold: usize,
    pub tau: f64,
    pub lambda: f64,
    pub error: f64,
}

impl CVResult {
    pub fn records(&self) -> Vec<CvRecord> {
        let mut out = Vec::new();
        for (fold, errors) in self.fold_errors.iter().enumerate() {
            for (ti, &tau) in self.taus.iter().enumerate() {
                for (li, &lambda) in self.lambdas_per_tau[ti].iter().enumerate() {
                    out.push(CvRecord {
                        fold,
                        tau,
                        lambda,
                        error: errors[(ti, li)],
                    });
                }
            }
        }
        out
    }

    pub fn min_error(&self) -> f64 {
        self.error_surface[self.best_index]
    }
}

/// Coefficients fitted along one `λ` path: `(β, η)` per `λ`.
pub type PathFit = Vec<(DMatrix<f64>, Option<DMatrix<f64>>)>;

/// Smallest entry, ties broken toward larger `τ` then larger `λ`.
pub fn select_best(
    surface: &DMatrix<f64>,
    taus: &[f64],
    lambdas_per_tau: &[Vec<f64>],
) -> (usize, usize) {
    let mut best: Option<(usize, usize)> = None;
    for ti in 0..surface.nrows() {
        for li in 0..lambdas_per_tau[ti].len() {
            let e = surface[(ti, li)];
            if e.is_nan() {
                continue;
            }
            best = match best {
                None => Some((ti, li)),
                Some(b) => {
                    let eb = surface[b];
                    let better = e < eb
                        || (e == eb
                            && (taus[ti] > taus[b.0]
                                || (taus[ti] == taus[b.0]
                                    && lambdas_per_tau[ti][li] > lambdas_per_tau[b.0][b.1])));
                    Some(if better { (ti, li) } else { b })
                }
            };
        }
    }
    best.unwrap_or((0, 0))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Cross-validation engine shared by all estimators.
///
/// `fit_path(train, tau_index, tau, lambdas)` returns one `(β, η)` per `λ`.
/// Each held-out fold is centered by its training-fold means, and errors are
/// summed over observed held-out entries.
pub fn cross_validate_with<F>(
    data: &RegressionData,
    grid: &TuningGrid,
    folds: &[Vec<usize>],
    jobs: usize,
    fit_path: F,
) -> Result<CVResult>
where
    F: Fn(&RegressionData, usize, f64, &[f64]) -> Result<PathFit> + Sync,
{
    let n = data.n();
    let q = data.q();
    let n_tau = grid.taus.len();
    let m = grid.lambdas_per_tau.iter().map(|l| l.len()).max().unwrap_or(0);
    if folds.iter().any(|f| f.is_empty()) {
        return Err(Error::InvalidParameter("fold with zero rows".into()));
    }

    let prepared: Vec<(RegressionData, crate::data::HeldOut)> = folds
        .iter()
        .map(|fold| {
            let train = data.subset(&complement(n, fold))?;
            let held = data.subset_centered_by(fold, &train);
            Ok((train, held))
        })
        .collect::<Result<_>>()?;

    let units: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..n_tau).map(move |t| (f, t)))
        .collect();
    let run = |&(f, t): &(usize, usize)| -> Result<Vec<DVector<f64>>> {
        let (train, held) = &prepared[f];
        let lambdas = &grid.lambdas_per_tau[t];
        let path = fit_path(train, t, grid.taus[t], lambdas)?;
        Ok(path
            .iter()
            .map(|(beta, eta)| held.column_errors(beta, eta.as_ref()))
            .collect())
    };
    let results: Vec<Result<Vec<DVector<f64>>>> =
        with_pool(jobs, || units.par_iter().map(run).collect());

    let mut fold_errors = vec![DMatrix::from_element(n_tau, m, f64::NAN); folds.len()];
    let mut column_errors = vec![DMatrix::zeros(m, q); n_tau];
    let mut error_surface = DMatrix::from_element(n_tau, m, f64::NAN);
    for t in 0..n_tau {
        for l in 0..grid.lambdas_per_tau[t].len() {
            error_surface[(t, l)] = 0.0;
        }
    }
    // accumulate in fixed fold order so results do not depend on `jobs`
    for (&(f, t), res) in units.iter().zip(results) {
        let per_lambda = res?;
        for (l, col) in per_lambda.iter().enumerate() {
            let total = col.sum();
            fold_errors[f][(t, l)] = total;
            error_surface[(t, l)] += total;
            for j in 0..q {
                column_errors[t][(l, j)] += col[j];
            }
        }
    }

    let best_index = select_best(&error_surface, &grid.taus, &grid.lambdas_per_tau);
    Ok(CVResult {
        taus: grid.taus.clone(),
        lambdas_per_tau: grid.lambdas_per_tau.clone(),
        best_tau: grid.taus[best_index.0],
        best_lambda: grid.lambdas_per_tau[best_index.0][best_index.1],
        error_surface,
        column_errors,
        fold_errors,
        best_index,
    })
}

/// Cross-validates the penalized weighted residual criterion over `grid`.
pub fn cross_validate(
    data: &RegressionData,
    penalty: &PenaltySpec,
    grid: &TuningGrid,
    options: &CvOptions,
) -> Result<CVResult> {
    let folds = fold_assignment(data.n(), options.folds, options.seed)?;
    cross_validate_with(data, grid, &folds, options.jobs, |train, _, tau, lambdas| {
        let path = solution_path(train, penalty, tau, lambdas, &options.solver)?;
        Ok(path.into_iter().map(|m| (m.beta_hat, m.eta_hat)).collect())
    })
}

/// Five log-spaced `τ` values spanning one decade either side of the
/// selected `τ`, reusing the `λ` sequence of the selected `τ`.
pub fn refine_grid(cv: &CVResult, grid: &TuningGrid) -> TuningGrid {
    let centre = cv.best_tau.log10();
    let taus: Vec<f64> = [1.0, 0.5, 0.0, -0.5, -1.0]
        .iter()
        .map(|offset| 10f64.powf(centre + offset))
        .collect();
    let lambdas = grid.lambdas_per_tau[cv.best_index.0].clone();
    TuningGrid::shared(taus, lambdas, grid.delta)
}

/// Cross-validates, then refits on all of `data` at the selected pair,
/// warm-starting along the `λ` path of the selected `τ`.
pub fn fit_cv(
    data: &RegressionData,
    penalty: &PenaltySpec,
    grid: &TuningGrid,
    options: &CvOptions,
) -> Result<(FittedModel, CVResult)> {
    let cv = cross_validate(data, penalty, grid, options)?;
    let (ti, li) = cv.best_index;
    let lambdas = &grid.lambdas_per_tau[ti][..=li];
    let mut path = solution_path(data, penalty, cv.best_tau, lambdas, &options.solver)?;
    let model = path.pop().ok_or(Error::Degenerate("empty path".into()))?;
    Ok((model, cv))
}
