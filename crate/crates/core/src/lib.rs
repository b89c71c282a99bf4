//! Multivariate response linear regression under the covariance link
//! `Σ ∝ β'β + σ²I`.
//!
//! The coefficient matrix is estimated by minimizing the weighted residual
//! sum of squares
//!
//! ```text
//! F_τ(β) = tr{ n⁻¹ (Y - Xβ)'(Y - Xβ) (β'β + τ I_q)⁻¹ } + (λ/τ) Pen(β)
//! ```
//!
//! with an accelerated proximal gradient method. Large `τ` recovers ordinary
//! penalized least squares; small `τ` lets the coefficient geometry shape the
//! error weighting. Extensions cover missing responses (an observed-data
//! criterion with column-weighted L1 penalty) and covariates measured without
//! error (projected out, then recovered in closed form).
//!
//! Modules:
//! - [`data`]: centering, domain types and prediction
//! - [`loss`]: criteria and gradients
//! - [`prox`]: proximal operators
//! - [`solver`]: the accelerated proximal gradient method
//! - [`tuning`]: grids, warm-started paths, cross-validation
//! - [`adjustments`]: covariate projection and missing-data bookkeeping
//! - [`competitors`]: lasso, two-step and corrected-lasso baselines
//! - [`simulation`]: data generators, metrics and the benchmark driver

pub mod adjustments;
pub mod competitors;
pub mod data;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod prox;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use data::{
    center_data, predict, CoefficientMatrix, FitConfig, FittedModel, PenaltySpec, RegressionData,
};
pub use error::{Error, Result};
pub use loss::{
    grad_full, grad_observed, loss_full, loss_observed, weight_inverse, SmoothLoss, WeightInverse,
};
pub use solver::{solve, LossKind};
pub use tuning::{build_grid, cross_validate, lambda_max, CVResult, CvOptions, TuningGrid};

pub use nalgebra::{DMatrix, DVector};
