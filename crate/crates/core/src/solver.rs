//! Accelerated proximal gradient descent with Armijo backtracking and a
//! monotone acceptance guard.
//!
//! Each iteration extrapolates from the last two iterates, takes a proximal
//! gradient step from the extrapolated point with the inverse step size
//! increased geometrically until the local quadratic upper bound holds, and
//! keeps the candidate only if the penalized objective did not increase.
//! A rejected candidate leaves the iterate in place, which makes the next
//! extrapolation vanish, so the following step is a plain proximal gradient
//! step from the current iterate.
//!
//! The inverse step size restarts from `t0` at every iteration. When the
//! caller leaves `t0` unset it is taken from the loss's curvature hint at the
//! initial point, which keeps the step size on the scale of the problem for
//! any `τ`.

use nalgebra::DMatrix;

use crate::adjustments;
use crate::data::{FitConfig, FittedModel, PenaltySpec, RegressionData};
use crate::error::{check_shape, Error, Result};
use crate::linalg;
use crate::loss::{SmoothLoss, WeightedQuadratic, WeightedResidualLoss};
use crate::prox;

/// Cap on step-size increases within one iteration.
pub const MAX_DOUBLINGS: usize = 100;

/// Relative slack allowed in the sufficient-decrease test to absorb
/// round-off when the candidate is numerically equal to the base point.
pub const DECREASE_SLACK: f64 = 1e-12;

/// Which data-fit term to minimize.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// `F_τ`; the data must not have a mask.
    Full,
    /// `G_{τ,O}` on observed entries; the data must have a mask.
    Observed,
    /// `tr{n⁻¹(Y - Xβ)'(Y - Xβ) W}` with the given fixed `q x q` weight `W`.
    FixedWeight(DMatrix<f64>),
}

impl LossKind {
    /// `Observed` when the data carry a mask, `Full` otherwise.
    pub fn for_data(data: &RegressionData) -> LossKind {
        if data.mask().is_some() {
            LossKind::Observed
        } else {
            LossKind::Full
        }
    }

    pub fn build(&self, data: &RegressionData, tau: f64) -> Result<Box<dyn SmoothLoss>> {
        Ok(match self {
            LossKind::Full => {
                if data.mask().is_some() {
                    return Err(Error::Unsupported("full loss on data with a mask".into()));
                }
                Box::new(WeightedResidualLoss::full(data, tau)?)
            }
            LossKind::Observed => {
                if data.mask().is_none() {
                    return Err(Error::Unsupported("observed-data loss requires a mask".into()));
                }
                Box::new(WeightedResidualLoss::observed(data, tau)?)
            }
            LossKind::FixedWeight(w) => Box::new(WeightedQuadratic::fixed_weight(data, w)?),
        })
    }
}

/// One line of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step: f64,
    /// Whether the step was taken from an extrapolated point and kept.
    pub extrapolated: bool,
    pub accepted: bool,
    pub backtracks: usize,
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub beta: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Accepted step from [`backtrack`].
#[derive(Debug, Clone, PartialEq)]
pub struct Backtrack {
    pub candidate: DMatrix<f64>,
    pub step: f64,
    pub candidate_loss: f64,
    pub increases: usize,
}

/// Sufficient-decrease test: `f(β̃) ≤ f(Γ) - tr[∇f(Γ)'(Γ - β̃)] + (t/2)‖Γ - β̃‖²`.
pub fn sufficient_decrease(
    loss_at_base: f64,
    grad_at_base: &DMatrix<f64>,
    base: &DMatrix<f64>,
    candidate: &DMatrix<f64>,
    candidate_loss: f64,
    step: f64,
) -> bool {
    let diff = base - candidate;
    let bound =
        loss_at_base - linalg::frob_dot(grad_at_base, &diff) + 0.5 * step * diff.norm_squared();
    candidate_loss <= bound + DECREASE_SLACK * loss_at_base.abs().max(bound.abs())
}

/// Proximal gradient step from `base`, increasing the inverse step size by
/// `growth` until the sufficient-decrease test passes.
pub fn backtrack(
    loss: &dyn SmoothLoss,
    penalty: &PenaltySpec,
    level: f64,
    base: &DMatrix<f64>,
    t_start: f64,
    growth: f64,
) -> Result<Backtrack> {
    let f_base = loss.value(base);
    if !f_base.is_finite() {
        return Err(Error::NonFinite("loss at step base point"));
    }
    let grad = loss.gradient(base);
    if !linalg::is_finite(&grad) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut t = t_start;
    for increases in 0..=MAX_DOUBLINGS {
        let candidate = prox::prox(penalty, &(base - &grad / t), level / t)?;
        let candidate_loss = loss.value(&candidate);
        if candidate_loss.is_finite()
            && sufficient_decrease(f_base, &grad, base, &candidate, candidate_loss, t)
        {
            return Ok(Backtrack {
                candidate,
                step: t,
                candidate_loss,
                increases,
            });
        }
        t *= growth;
    }
    Err(Error::BacktrackingExhausted {
        iteration: 0,
        doublings: MAX_DOUBLINGS,
    })
}

/// Minimizes `loss(β) + level·Pen(β)` from `init`.
pub fn minimize(
    loss: &dyn SmoothLoss,
    penalty: &PenaltySpec,
    level: f64,
    config: &FitConfig,
    init: &DMatrix<f64>,
    mut sink: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<SolveOutcome> {
    config.validate()?;
    let (p, q) = loss.shape();
    check_shape("initial coefficients", (p, q), init.shape())?;
    penalty.validate(q)?;
    if !linalg::is_finite(init) {
        return Err(Error::NonFinite("initial coefficients"));
    }
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty level {level}")));
    }

    let objective = |loss_value: f64, beta: &DMatrix<f64>| {
        if level == 0.0 {
            loss_value
        } else {
            loss_value + level * prox::penalty_value(penalty, beta)
        }
    };

    let t0 = config.t0.unwrap_or_else(|| {
        let hint = loss.curvature_hint(init);
        if hint.is_finite() && hint > 0.0 {
            hint
        } else {
            1.0
        }
    });

    let mut beta = init.clone();
    let mut beta_prev = init.clone();
    let mut alpha = 1.0_f64;
    let mut alpha_prev = 1.0_f64;
    let mut current = objective(loss.value(&beta), &beta);
    if !current.is_finite() {
        return Err(Error::NonFinite("objective at initial point"));
    }
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..config.max_iter {
        iterations = k + 1;
        let momentum = if config.accelerate {
            (alpha_prev - 1.0) / alpha
        } else {
            0.0
        };
        let moved = momentum != 0.0 && beta != beta_prev;
        let extrapolated = if moved {
            Some(&beta + (&beta - &beta_prev) * momentum)
        } else {
            None
        };

        let step_from = |base: &DMatrix<f64>| {
            backtrack(loss, penalty, level, base, t0, config.step_growth).map_err(|e| match e {
                Error::BacktrackingExhausted { doublings, .. } => Error::BacktrackingExhausted {
                    iteration: k,
                    doublings,
                },
                other => other,
            })
        };

        // A non-finite extrapolated point falls back to a plain step.
        let (step, used_extrapolation) = match &extrapolated {
            Some(gamma) if loss.value(gamma).is_finite() => (step_from(gamma)?, true),
            _ => (step_from(&beta)?, false),
        };

        let candidate_objective = objective(step.candidate_loss, &step.candidate);
        let accepted = candidate_objective <= current;
        let previous = current;
        alpha_prev = alpha;
        alpha = (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt()) / 2.0;
        if accepted {
            beta_prev = std::mem::replace(&mut beta, step.candidate);
            current = candidate_objective;
        } else {
            beta_prev = beta.clone();
        }
        trace.push(current);

        if let Some(sink) = sink.as_deref_mut() {
            sink(&IterationRecord {
                iteration: k + 1,
                objective: current,
                step: step.step,
                extrapolated: used_extrapolation && accepted,
                accepted,
                backtracks: step.increases,
            });
        }

        if !accepted {
            if used_extrapolation {
                continue;
            }
            // A plain step that fails to decrease means no further progress.
            converged = true;
            break;
        }
        let change = (previous - current).abs();
        if change <= config.tol * previous.abs() {
            converged = true;
            break;
        }
    }

    Ok(SolveOutcome {
        beta,
        objective_trace: trace,
        converged,
        iterations,
    })
}

/// Fits `loss + (λ/τ)·Pen` on `data` from `init`.
///
/// Data carrying error-free covariates are projected first, the coefficient
/// matrix is fitted on the projected data, and the covariate coefficients are
/// recovered in closed form.
pub fn solve(
    data: &RegressionData,
    penalty: &PenaltySpec,
    config: &FitConfig,
    init: &DMatrix<f64>,
    loss_kind: &LossKind,
) -> Result<FittedModel> {
    solve_traced(data, penalty, config, init, loss_kind, None)
}

/// [`solve`] with a per-iteration trace sink.
pub fn solve_traced(
    data: &RegressionData,
    penalty: &PenaltySpec,
    config: &FitConfig,
    init: &DMatrix<f64>,
    loss_kind: &LossKind,
    sink: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<FittedModel> {
    config.validate()?;
    check_shape("initial coefficients", (data.p(), data.q()), init.shape())?;
    let level = config.lambda / config.tau;

    let (outcome, eta) = if data.covariates().is_some() {
        let projected = adjustments::project_out_covariates(data)?;
        let loss = loss_kind.build(&projected.data, config.tau)?;
        let outcome = minimize(loss.as_ref(), penalty, level, config, init, sink)?;
        let eta = projected.recover_eta(&outcome.beta, data)?;
        (outcome, Some(eta))
    } else {
        let loss = loss_kind.build(data, config.tau)?;
        (minimize(loss.as_ref(), penalty, level, config, init, sink)?, None)
    };

    let mut model =
        FittedModel::from_coefficients(data, outcome.beta, eta, config.tau, config.lambda);
    model.objective_trace = outcome.objective_trace;
    model.converged = outcome.converged;
    model.iterations = outcome.iterations;
    Ok(model)
}

/// Penalized objective `loss(β) + (λ/τ)·Pen(β)` as minimized by [`solve`].
pub fn penalized_objective(
    data: &RegressionData,
    penalty: &PenaltySpec,
    config: &FitConfig,
    beta: &DMatrix<f64>,
    loss_kind: &LossKind,
) -> Result<f64> {
    let level = config.lambda / config.tau;
    let value = if data.covariates().is_some() {
        let projected = adjustments::project_out_covariates(data)?;
        loss_kind.build(&projected.data, config.tau)?.value(beta)
    } else {
        loss_kind.build(data, config.tau)?.value(beta)
    };
    Ok(value + level * prox::penalty_value(penalty, beta))
}
