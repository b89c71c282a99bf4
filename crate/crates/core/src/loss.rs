//! The weighted residual sum of squares criterion
//! `tr{n⁻¹ (Y - Xβ)'(Y - Xβ) (β'β + τI)⁻¹}`, its observed-data variant for
//! masked responses, the fixed-weight convex approximation, and exact
//! gradients for all three.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::data::RegressionData;
use crate::error::{check_shape, Error, Result};
use crate::linalg;

/// `(β'β + τI_q)⁻¹` together with the `τ` it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightInverse {
    pub omega_inv: DMatrix<f64>,
    pub tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Inverts `β'β + τI`, factoring the `q x q` matrix directly when `q <= p`
/// and going through the `p x p` Woodbury form otherwise.
pub fn weight_inverse(beta: &DMatrix<f64>, tau: f64) -> Result<WeightInverse> {
    check_tau(tau)?;
    if !linalg::is_finite(beta) {
        return Err(Error::NonFinite("coefficients"));
    }
    let omega_inv = if beta.ncols() <= beta.nrows() {
        weight_inverse_direct(beta, tau)
    } else {
        weight_inverse_woodbury(beta, tau)
    }
    .ok_or(Error::NonFinite("weight matrix factorization"))?;
    Ok(WeightInverse { omega_inv, tau })
}

pub(crate) fn weight_inverse_direct(beta: &DMatrix<f64>, tau: f64) -> Option<DMatrix<f64>> {
    let q = beta.ncols();
    let omega = beta.tr_mul(beta) + DMatrix::identity(q, q) * tau;
    let chol = Cholesky::new(omega)?;
    Some(linalg::symmetrize(&chol.inverse()))
}

/// `τ⁻¹I - τ⁻²β'(I_p + τ⁻¹ββ')⁻¹β`.
pub(crate) fn weight_inverse_woodbury(beta: &DMatrix<f64>, tau: f64) -> Option<DMatrix<f64>> {
    let (p, q) = beta.shape();
    let inner = DMatrix::identity(p, p) + (beta * beta.transpose()) / tau;
    let chol = Cholesky::new(inner)?;
    let solved = chol.solve(beta);
    let correction = beta.tr_mul(&solved) / (tau * tau);
    Some(linalg::symmetrize(&(DMatrix::identity(q, q) / tau - correction)))
}

/// A differentiable data-fit term minimized by the proximal gradient solver.
pub trait SmoothLoss: Sync {
    /// Shape `(p, q)` of the coefficient matrix.
    fn shape(&self) -> (usize, usize);

    /// Loss value; non-finite values signal an unusable point.
    fn value(&self, beta: &DMatrix<f64>) -> f64;

    fn gradient(&self, beta: &DMatrix<f64>) -> DMatrix<f64>;

    /// Rough local curvature at `beta`, used to seed the step size.
    fn curvature_hint(&self, beta: &DMatrix<f64>) -> f64;
}

/// `F_τ` (no mask) or the observed-data criterion `G_{τ,O}` (with mask).
///
/// Both reduce to `n⁻¹ Σ_i r̃_i' Ω⁻¹ r̃_i` where `r̃_i` is the residual row
/// with unobserved entries zeroed, so the masked case needs no per-pattern
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct WeightedResidualLoss {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    mask: Option<DMatrix<f64>>,
    tau: f64,
    gram_top_eigenvalue: f64,
}

impl WeightedResidualLoss {
    /// Full-data criterion; any mask on `data` is ignored.
    pub fn full(data: &RegressionData, tau: f64) -> Result<Self> {
        Self::build(data.x.clone(), data.y.clone(), None, tau)
    }

    /// Observed-data criterion using the mask on `data` (all observed when
    /// there is none).
    pub fn observed(data: &RegressionData, tau: f64) -> Result<Self> {
        let mask = data
            .mask
            .as_ref()
            .map(|m| m.map(|observed| if observed { 1.0 } else { 0.0 }));
        Self::build(data.x.clone(), data.y.clone(), mask, tau)
    }

    fn build(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        mask: Option<DMatrix<f64>>,
        tau: f64,
    ) -> Result<Self> {
        check_tau(tau)?;
        let n = x.nrows() as f64;
        let gram_top_eigenvalue = linalg::max_eigenvalue(&(x.tr_mul(&x) / n)).max(0.0);
        Ok(WeightedResidualLoss {
            x,
            y,
            mask,
            tau,
            gram_top_eigenvalue,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn residual(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = &self.y - &self.x * beta;
        if let Some(mask) = &self.mask {
            r.component_mul_assign(mask);
        }
        r
    }

    fn omega_cholesky(&self, beta: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
        let q = beta.ncols();
        Cholesky::new(beta.tr_mul(beta) + DMatrix::identity(q, q) * self.tau)
    }
}

impl SmoothLoss for WeightedResidualLoss {
    fn shape(&self) -> (usize, usize) {
        (self.x.ncols(), self.y.ncols())
    }

    fn value(&self, beta: &DMatrix<f64>) -> f64 {
        if !linalg::is_finite(beta) {
            return f64::NAN;
        }
        let Some(chol) = self.omega_cholesky(beta) else {
            return f64::NAN;
        };
        // tr(R'R Ω⁻¹) = ‖L⁻¹R'‖²_F with Ω = LL'
        let r = self.residual(beta);
        let Some(z) = chol.l_dirty().solve_lower_triangular(&r.transpose()) else {
            return f64::NAN;
        };
        z.norm_squared() / self.x.nrows() as f64
    }

    fn gradient(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.x.nrows() as f64;
        let Ok(w) = weight_inverse(beta, self.tau) else {
            return DMatrix::from_element(beta.nrows(), beta.ncols(), f64::NAN);
        };
        let omega_inv = &w.omega_inv;
        let r = self.residual(beta);
        let mut weighted = &r * omega_inv;
        if let Some(mask) = &self.mask {
            weighted.component_mul_assign(mask);
        }
        let rtr = r.tr_mul(&r);
        let curvature_term = beta * omega_inv * rtr * omega_inv;
        (curvature_term + self.x.tr_mul(&weighted)) * (-2.0 / n)
    }

    fn curvature_hint(&self, beta: &DMatrix<f64>) -> f64 {
        let q = beta.ncols();
        let smallest = if q <= beta.nrows() {
            linalg::min_eigenvalue(&beta.tr_mul(beta)).max(0.0)
        } else {
            0.0
        };
        2.0 * self.gram_top_eigenvalue / (self.tau + smallest)
    }
}

/// `tr{(C - β'ρ - ρ'β + β'Gβ) W}` with fixed `G`, `ρ`, `C`, `W`.
///
/// With `G = n⁻¹X'X`, `ρ = n⁻¹X'Y`, `C = n⁻¹Y'Y` this is the residual sum of
/// squares weighted by a fixed `W`; with `W = I`, `C = 0` it is the
/// corrected-Gram criterion `tr(β'Σβ - 2β'ρ)`.
#[derive(Debug, Clone)]
pub struct WeightedQuadratic {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    constant: f64,
    weight: DMatrix<f64>,
    curvature: f64,
}

impl WeightedQuadratic {
    pub fn new(
        gram: DMatrix<f64>,
        cross: DMatrix<f64>,
        constant: f64,
        weight: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, q) = cross.shape();
        check_shape("quadratic gram", (p, p), gram.shape())?;
        check_shape("quadratic weight", (q, q), weight.shape())?;
        if !(linalg::is_finite(&gram) && linalg::is_finite(&cross) && linalg::is_finite(&weight))
        {
            return Err(Error::NonFinite("quadratic loss inputs"));
        }
        let curvature =
            2.0 * linalg::max_eigenvalue(&gram).max(0.0) * linalg::max_eigenvalue(&weight).max(0.0);
        Ok(WeightedQuadratic {
            gram,
            cross,
            constant,
            weight,
            curvature,
        })
    }

    /// Residual sum of squares of `data` weighted by a fixed `q x q` matrix.
    pub fn fixed_weight(data: &RegressionData, weight: &DMatrix<f64>) -> Result<Self> {
        if data.has_missing() {
            return Err(Error::Unsupported("fixed-weight loss with missing responses".into()));
        }
        let n = data.n() as f64;
        let q = data.q();
        check_shape("fixed weight", (q, q), weight.shape())?;
        let gram = data.x.tr_mul(&data.x) / n;
        let cross = data.x.tr_mul(&data.y) / n;
        let constant = linalg::frob_dot(&(data.y.tr_mul(&data.y) / n), weight);
        Self::new(gram, cross, constant, weight.clone())
    }
}

impl SmoothLoss for WeightedQuadratic {
    fn shape(&self) -> (usize, usize) {
        self.cross.shape()
    }

    fn value(&self, beta: &DMatrix<f64>) -> f64 {
        let gb = &self.gram * beta;
        let inner = beta.tr_mul(&gb) - beta.tr_mul(&self.cross) * 2.0;
        // tr(ρ'βW) = tr(β'ρW) for symmetric W, so the two cross terms merge
        self.constant + linalg::frob_dot(&inner, &self.weight)
    }

    fn gradient(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.gram * beta - &self.cross) * &self.weight * 2.0
    }

    fn curvature_hint(&self, _beta: &DMatrix<f64>) -> f64 {
        self.curvature
    }
}

fn check_beta(beta: &DMatrix<f64>, data: &RegressionData) -> Result<()> {
    check_shape("coefficients", (data.p(), data.q()), beta.shape())
}

/// `F_τ(β)` for data without missing responses.
pub fn loss_full(beta: &DMatrix<f64>, tau: f64, data: &RegressionData) -> Result<f64> {
    check_beta(beta, data)?;
    if data.mask.is_some() {
        return Err(Error::Unsupported("mask present; use loss_observed".into()));
    }
    Ok(WeightedResidualLoss::full(data, tau)?.value(beta))
}

/// `∇F_τ(β)`.
pub fn grad_full(beta: &DMatrix<f64>, tau: f64, data: &RegressionData) -> Result<DMatrix<f64>> {
    check_beta(beta, data)?;
    if data.mask.is_some() {
        return Err(Error::Unsupported("mask present; use grad_observed".into()));
    }
    Ok(WeightedResidualLoss::full(data, tau)?.gradient(beta))
}

/// `G_{τ,O}(β)`, summing only over observed response entries.
pub fn loss_observed(beta: &DMatrix<f64>, tau: f64, data: &RegressionData) -> Result<f64> {
    check_beta(beta, data)?;
    Ok(WeightedResidualLoss::observed(data, tau)?.value(beta))
}

/// `∇G_{τ,O}(β)`.
pub fn grad_observed(
    beta: &DMatrix<f64>,
    tau: f64,
    data: &RegressionData,
) -> Result<DMatrix<f64>> {
    check_beta(beta, data)?;
    Ok(WeightedResidualLoss::observed(data, tau)?.gradient(beta))
}
