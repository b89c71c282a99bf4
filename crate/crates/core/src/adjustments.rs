//! Error-free covariates (projected out before fitting, coefficients
//! recovered in closed form) and missing-response bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::data::RegressionData;
use crate::error::{check_shape, Error, Result};

/// Data with the covariate column space projected out, plus what is needed
/// to recover the covariate coefficients.
#[derive(Debug, Clone)]
pub struct ProjectedData {
    /// `P_V X` and `P_V Y`, with no covariates attached.
    pub data: RegressionData,
    /// Orthonormal basis `Q` of the column space of `V` (`n x k`).
    basis: DMatrix<f64>,
    /// Triangular factor `R` with `V = QR`.
    triangular: DMatrix<f64>,
}

impl ProjectedData {
    /// `(V'V)⁻¹V'(Y - Xβ)`, evaluated as `R⁻¹Q'(Y - Xβ)`.
    pub fn recover_eta(&self, beta: &DMatrix<f64>, original: &RegressionData) -> Result<DMatrix<f64>> {
        check_shape("coefficients", (original.p(), original.q()), beta.shape())?;
        check_shape(
            "covariate basis rows",
            (original.n(), self.basis.ncols()),
            self.basis.shape(),
        )?;
        let resid = &original.y - &original.x * beta;
        let rhs = self.basis.tr_mul(&resid);
        self.triangular
            .solve_upper_triangular(&rhs)
            .ok_or(Error::RankDeficient)
    }

    /// `I - V(V'V)⁻¹V'`, materialized (intended for small `n`).
    pub fn projector(&self) -> DMatrix<f64> {
        let n = self.basis.nrows();
        DMatrix::identity(n, n) - &self.basis * self.basis.transpose()
    }
}

/// Replaces `Y`, `X` by `P_V Y`, `P_V X`.
pub fn project_out_covariates(data: &RegressionData) -> Result<ProjectedData> {
    let v = data
        .covariates()
        .ok_or_else(|| Error::InvalidParameter("data have no covariates".into()))?;
    let qr = v.clone().qr();
    let basis = qr.q();
    let triangular = qr.r();
    let largest = triangular.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if triangular
        .diagonal()
        .iter()
        .any(|d| d.abs() <= largest * 1e-12 || largest == 0.0)
    {
        return Err(Error::RankDeficient);
    }
    let remove = |m: &DMatrix<f64>| m - &basis * basis.tr_mul(m);
    let x = remove(&data.x);
    let y = remove(&data.y);
    Ok(ProjectedData {
        data: data.with_centered(x, y),
        basis,
        triangular,
    })
}

/// Closed-form covariate coefficients for a given `β̃`.
pub fn recover_eta(beta: &DMatrix<f64>, data: &RegressionData) -> Result<DMatrix<f64>> {
    project_out_covariates(data)?.recover_eta(beta, data)
}

/// Observed counts `n_k` per response column and penalty weights `n / n_k`.
pub fn missing_counts(mask: &DMatrix<bool>) -> Result<(Vec<usize>, DVector<f64>)> {
    let n = mask.nrows();
    let counts: Vec<usize> = mask
        .column_iter()
        .map(|c| c.iter().filter(|o| **o).count())
        .collect();
    if let Some(k) = counts.iter().position(|c| *c == 0) {
        return Err(Error::EmptyColumn(k));
    }
    let weights = DVector::from_iterator(counts.len(), counts.iter().map(|c| n as f64 / *c as f64));
    Ok((counts, weights))
}
