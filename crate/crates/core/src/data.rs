//! Shared domain types: centered regression data, penalties, solver
//! configuration and fitted models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::linalg;

/// A `p x q` regression coefficient matrix.
pub type CoefficientMatrix = DMatrix<f64>;

/// Column-centered predictors and responses together with the means needed
/// to recover an intercept.
///
/// When a mask is present, unobserved response cells hold `0.0` and the
/// response means are taken over observed entries only.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub(crate) x: DMatrix<f64>,
    pub(crate) y: DMatrix<f64>,
    pub(crate) x_bar: DVector<f64>,
    pub(crate) y_bar: DVector<f64>,
    pub(crate) mask: Option<DMatrix<bool>>,
    pub(crate) v: Option<DMatrix<f64>>,
    pub(crate) v_bar: Option<DVector<f64>>,
}

impl RegressionData {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x_bar(&self) -> &DVector<f64> {
        &self.x_bar
    }

    pub fn y_bar(&self) -> &DVector<f64> {
        &self.y_bar
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        self.mask.as_ref()
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.v.as_ref()
    }

    pub fn covariate_means(&self) -> Option<&DVector<f64>> {
        self.v_bar.as_ref()
    }

    pub fn has_missing(&self) -> bool {
        self.mask
            .as_ref()
            .is_some_and(|m| m.iter().any(|observed| !observed))
    }

    /// Predictors on their original scale.
    pub fn raw_x(&self) -> DMatrix<f64> {
        uncenter(&self.x, &self.x_bar)
    }

    /// Responses on their original scale; unobserved cells are `NaN`.
    pub fn raw_y(&self) -> DMatrix<f64> {
        let mut raw = uncenter(&self.y, &self.y_bar);
        if let Some(mask) = &self.mask {
            for (value, observed) in raw.iter_mut().zip(mask.iter()) {
                if !observed {
                    *value = f64::NAN;
                }
            }
        }
        raw
    }

    pub fn raw_v(&self) -> Option<DMatrix<f64>> {
        match (&self.v, &self.v_bar) {
            (Some(v), Some(v_bar)) => Some(uncenter(v, v_bar)),
            _ => None,
        }
    }

    /// Recenters the selected rows using their own means.
    pub fn subset(&self, rows: &[usize]) -> Result<RegressionData> {
        let x = linalg::select_rows(&self.raw_x(), rows);
        let y = linalg::select_rows(&self.raw_y(), rows);
        let v = self.raw_v().map(|v| linalg::select_rows(&v, rows));
        let mask = self.mask.as_ref().map(|m| linalg::select_rows(m, rows));
        center_data(&x, &y, v.as_ref(), mask.as_ref())
    }

    /// Selected rows centered by the means stored in `reference`, as used for
    /// held-out folds.
    pub fn subset_centered_by(&self, rows: &[usize], reference: &RegressionData) -> HeldOut {
        let x = linalg::select_rows(&self.raw_x(), rows);
        let y = linalg::select_rows(&self.raw_y(), rows);
        let mask = self.mask.as_ref().map(|m| linalg::select_rows(m, rows));
        let x = recenter(&x, &reference.x_bar);
        let mut y = recenter(&y, &reference.y_bar);
        if let Some(mask) = &mask {
            for (value, observed) in y.iter_mut().zip(mask.iter()) {
                if !observed {
                    *value = 0.0;
                }
            }
        }
        let v = match (self.raw_v(), &reference.v_bar) {
            (Some(v), Some(v_bar)) => Some(recenter(&linalg::select_rows(&v, rows), v_bar)),
            _ => None,
        };
        HeldOut { x, y, mask, v }
    }

    /// Same data with the responses replaced by `y` (already centered, zeros
    /// at unobserved cells).
    pub(crate) fn with_centered(&self, x: DMatrix<f64>, y: DMatrix<f64>) -> RegressionData {
        RegressionData {
            x,
            y,
            x_bar: self.x_bar.clone(),
            y_bar: self.y_bar.clone(),
            mask: self.mask.clone(),
            v: None,
            v_bar: None,
        }
    }
}

/// A held-out block centered by training means.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub mask: Option<DMatrix<bool>>,
    pub v: Option<DMatrix<f64>>,
}

impl HeldOut {
    /// Squared prediction error per response column, summed over observed
    /// entries only.
    pub fn column_errors(&self, beta: &DMatrix<f64>, eta: Option<&DMatrix<f64>>) -> DVector<f64> {
        let mut resid = &self.y - &self.x * beta;
        if let (Some(v), Some(eta)) = (&self.v, eta) {
            resid -= v * eta;
        }
        let mut out = DVector::zeros(resid.ncols());
        for j in 0..resid.ncols() {
            let mut s = 0.0;
            for i in 0..resid.nrows() {
                let observed = self.mask.as_ref().is_none_or(|m| m[(i, j)]);
                if observed {
                    s += resid[(i, j)] * resid[(i, j)];
                }
            }
            out[j] = s;
        }
        out
    }
}

fn uncenter(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] + means[j])
}

fn recenter(m: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j])
}

/// Column-centers predictors, responses and optional covariates.
///
/// Masked response columns are centered by the mean of their observed
/// entries; unobserved cells are stored as `0.0` and never read as data.
pub fn center_data(
    raw_x: &DMatrix<f64>,
    raw_y: &DMatrix<f64>,
    raw_v: Option<&DMatrix<f64>>,
    mask: Option<&DMatrix<bool>>,
) -> Result<RegressionData> {
    let (n, p) = raw_x.shape();
    let q = raw_y.ncols();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 rows, got {n}")));
    }
    if p == 0 || q == 0 {
        return Err(Error::InvalidParameter("empty predictor or response matrix".into()));
    }
    check_shape("response rows", (n, q), raw_y.shape())?;
    if let Some(mask) = mask {
        check_shape("mask", (n, q), mask.shape())?;
    }
    if !linalg::is_finite(raw_x) {
        return Err(Error::NonFinite("predictors"));
    }

    let x_bar = linalg::column_means(raw_x);
    let x = recenter(raw_x, &x_bar);

    let mut y_bar = DVector::zeros(q);
    let mut y = DMatrix::zeros(n, q);
    for j in 0..q {
        let observed = |i: usize| mask.is_none_or(|m| m[(i, j)]);
        let mut count = 0usize;
        let mut sum = 0.0;
        for i in (0..n).filter(|&i| observed(i)) {
            let value = raw_y[(i, j)];
            if !value.is_finite() {
                return Err(Error::NonFinite("observed responses"));
            }
            sum += value;
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptyColumn(j));
        }
        let mean = sum / count as f64;
        y_bar[j] = mean;
        for i in (0..n).filter(|&i| observed(i)) {
            y[(i, j)] = raw_y[(i, j)] - mean;
        }
    }

    let (v, v_bar) = match raw_v {
        None => (None, None),
        Some(raw_v) => {
            check_shape("covariate rows", (n, raw_v.ncols()), raw_v.shape())?;
            if mask.is_some() {
                return Err(Error::Unsupported(
                    "missing responses together with error-free covariates".into(),
                ));
            }
            if !linalg::is_finite(raw_v) {
                return Err(Error::NonFinite("covariates"));
            }
            let k = raw_v.ncols();
            if k == 0 || k >= n {
                return Err(Error::RankDeficient);
            }
            let v_bar = linalg::column_means(raw_v);
            let v = recenter(raw_v, &v_bar);
            check_full_column_rank(&v)?;
            (Some(v), Some(v_bar))
        }
    };

    Ok(RegressionData {
        x,
        y,
        x_bar,
        y_bar,
        mask: mask.cloned(),
        v,
        v_bar,
    })
}

pub(crate) fn check_full_column_rank(v: &DMatrix<f64>) -> Result<()> {
    let sv = v.clone().singular_values();
    let largest = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if largest == 0.0 || smallest <= largest * 1e-10 * v.nrows().max(v.ncols()) as f64 {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

/// Penalty family applied to the coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PenaltySpec {
    /// `Σ |β_ij|`
    L1,
    /// `Σ_i ‖β_i·‖₂`
    GroupRow,
    /// `l1_weight Σ |β_ij| + group_weight Σ_i ‖β_i·‖₂`
    SparseGroup { l1_weight: f64, group_weight: f64 },
    /// Sum of singular values.
    Nuclear,
    /// `Σ_k w_k Σ_j |β_jk|`
    WeightedL1 { column_weights: Vec<f64> },
}

impl PenaltySpec {
    pub fn validate(&self, q: usize) -> Result<()> {
        match self {
            PenaltySpec::SparseGroup {
                l1_weight,
                group_weight,
            } => {
                if !(*l1_weight >= 0.0 && *group_weight >= 0.0) {
                    return Err(Error::InvalidParameter(
                        "sparse-group weights must be nonnegative".into(),
                    ));
                }
            }
            PenaltySpec::WeightedL1 { column_weights } => {
                if column_weights.len() != q {
                    return Err(Error::DimensionMismatch {
                        context: "column weights",
                        expected: q.to_string(),
                        found: column_weights.len().to_string(),
                    });
                }
                if column_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::InvalidParameter("column weights must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Column-weighted L1 with weights `n / n_k` from a response mask.
    pub fn weighted_from_mask(mask: &DMatrix<bool>) -> Result<PenaltySpec> {
        let (_, weights) = crate::adjustments::missing_counts(mask)?;
        Ok(PenaltySpec::WeightedL1 {
            column_weights: weights.iter().cloned().collect(),
        })
    }

    /// Whether the penalty is separable across entries.
    pub fn is_entrywise(&self) -> bool {
        matches!(self, PenaltySpec::L1 | PenaltySpec::WeightedL1 { .. })
    }
}

/// Tuning values and solver controls for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub tau: f64,
    pub lambda: f64,
    /// Initial inverse step size. `None` picks a data-driven value at the
    /// start of every solve (see [`crate::solver`]).
    pub t0: Option<f64>,
    /// Factor applied to the inverse step size when the sufficient-decrease
    /// test fails.
    pub step_growth: f64,
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    /// Nesterov extrapolation with a monotone guard; `false` gives plain
    /// proximal gradient steps.
    pub accelerate: bool,
}

impl FitConfig {
    pub const DEFAULT_STEP_GROWTH: f64 = 2.0;
    pub const DEFAULT_MAX_ITER: usize = 1000;
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn new(tau: f64, lambda: f64) -> Self {
        FitConfig {
            tau,
            lambda,
            t0: None,
            step_growth: Self::DEFAULT_STEP_GROWTH,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
            accelerate: true,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        FitConfig {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        FitConfig {
            tau,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let Some(t0) = self.t0 {
            if !positive(t0) {
                return Err(Error::InvalidParameter(format!("t0 must be positive, got {t0}")));
            }
        }
        if !(self.step_growth > 1.0 && self.step_growth.is_finite()) {
            return Err(Error::InvalidParameter("step growth must exceed 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !positive(self.tol) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a fit: coefficients on the centered scale plus the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub beta_hat: CoefficientMatrix,
    pub eta_hat: Option<DMatrix<f64>>,
    pub mu_hat: DVector<f64>,
    pub tau: f64,
    pub lambda: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    /// Wraps coefficients fitted on `data`, recovering the intercept from the
    /// stored means.
    pub fn from_coefficients(
        data: &RegressionData,
        beta_hat: CoefficientMatrix,
        eta_hat: Option<DMatrix<f64>>,
        tau: f64,
        lambda: f64,
    ) -> FittedModel {
        let mu_hat = intercept(data, &beta_hat, eta_hat.as_ref());
        FittedModel {
            beta_hat,
            eta_hat,
            mu_hat,
            tau,
            lambda,
            objective_trace: Vec::new(),
            converged: true,
            iterations: 0,
        }
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }
}

/// `ȳ - β'x̄ - η'v̄`.
pub fn intercept(
    data: &RegressionData,
    beta: &DMatrix<f64>,
    eta: Option<&DMatrix<f64>>,
) -> DVector<f64> {
    let mut mu = &data.y_bar - beta.transpose() * &data.x_bar;
    if let (Some(eta), Some(v_bar)) = (eta, &data.v_bar) {
        mu -= eta.transpose() * v_bar;
    }
    mu
}

/// Predictions on the original response scale.
pub fn predict(
    model: &FittedModel,
    new_x: &DMatrix<f64>,
    new_v: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let (p, q) = model.beta_hat.shape();
    let m = new_x.nrows();
    check_shape("prediction predictors", (m, p), new_x.shape())?;
    let mut out = new_x * &model.beta_hat;
    match (&model.eta_hat, new_v) {
        (Some(eta), Some(v)) => {
            check_shape("prediction covariates", (m, eta.nrows()), v.shape())?;
            out += v * eta;
        }
        (None, None) => {}
        (Some(_), None) => {
            return Err(Error::InvalidParameter(
                "model has covariate coefficients; covariates are required".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(Error::InvalidParameter(
                "model has no covariate coefficients; covariates must be omitted".into(),
            ))
        }
    }
    for mut row in out.row_iter_mut() {
        for j in 0..q {
            row[j] += model.mu_hat[j];
        }
    }
    Ok(out)
}
