//! Closed-form proximal operators `argmin_Z ½‖Z - M‖²_F + t·Pen(Z)`.

use nalgebra::DMatrix;

use crate::data::PenaltySpec;
use crate::error::{Error, Result};

/// Inputs within a few rounding errors of the threshold map to exactly zero,
/// so that `λ = λ_max` reproduces the all-zero solution.
const THRESHOLD_SLACK: f64 = 8.0 * f64::EPSILON;

fn soft(value: f64, level: f64) -> f64 {
    if value.abs() <= level * (1.0 + THRESHOLD_SLACK) {
        0.0
    } else {
        value - level.copysign(value)
    }
}

fn shrink_factor(norm: f64, level: f64) -> f64 {
    if norm <= level * (1.0 + THRESHOLD_SLACK) {
        0.0
    } else {
        1.0 - level / norm
    }
}

/// Entrywise soft-thresholding.
pub fn prox_l1(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    m.map(|v| soft(v, t))
}

/// Row-wise group soft-thresholding.
pub fn prox_group_rows(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let factor = shrink_factor(row.norm(), t);
        row *= factor;
    }
    out
}

/// Soft-threshold entries at `t_l1`, then rows at `t_group`.
pub fn prox_sparse_group(m: &DMatrix<f64>, t_l1: f64, t_group: f64) -> DMatrix<f64> {
    prox_group_rows(&prox_l1(m, t_l1), t_group)
}

/// Singular value soft-thresholding.
pub fn prox_nuclear(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("nuclear-norm proximal input"));
    }
    if t == 0.0 {
        return Ok(m.clone());
    }
    let mut svd = m.clone().svd(true, true);
    for s in svd.singular_values.iter_mut() {
        *s = if *s <= t * (1.0 + THRESHOLD_SLACK) { 0.0 } else { *s - t };
    }
    svd.recompose()
        .map_err(|_| Error::NonFinite("singular value decomposition"))
}

/// Soft-thresholds column `k` at `t * weights[k]`.
pub fn prox_weighted_l1(m: &DMatrix<f64>, t: f64, weights: &[f64]) -> Result<DMatrix<f64>> {
    if weights.len() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "column weights",
            expected: m.ncols().to_string(),
            found: weights.len().to_string(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter("column weights must be positive".into()));
    }
    let mut out = m.clone();
    for (mut col, w) in out.column_iter_mut().zip(weights) {
        let level = t * w;
        col.apply(|v| *v = soft(*v, level));
    }
    Ok(out)
}

/// Penalty value `Pen(β)`.
pub fn penalty_value(penalty: &PenaltySpec, beta: &DMatrix<f64>) -> f64 {
    let l1 = || beta.iter().map(|v| v.abs()).sum::<f64>();
    let group = || beta.row_iter().map(|r| r.norm()).sum::<f64>();
    match penalty {
        PenaltySpec::L1 => l1(),
        PenaltySpec::GroupRow => group(),
        PenaltySpec::SparseGroup {
            l1_weight,
            group_weight,
        } => l1_weight * l1() + group_weight * group(),
        PenaltySpec::Nuclear => beta.singular_values().sum(),
        PenaltySpec::WeightedL1 { column_weights } => beta
            .column_iter()
            .zip(column_weights)
            .map(|(c, w)| w * c.iter().map(|v| v.abs()).sum::<f64>())
            .sum(),
    }
}

/// Proximal operator of `t·Pen`.
pub fn prox(penalty: &PenaltySpec, m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("prox level must be nonnegative, got {t}")));
    }
    match penalty {
        PenaltySpec::L1 => Ok(prox_l1(m, t)),
        PenaltySpec::GroupRow => Ok(prox_group_rows(m, t)),
        PenaltySpec::SparseGroup {
            l1_weight,
            group_weight,
        } => Ok(prox_sparse_group(m, t * l1_weight, t * group_weight)),
        PenaltySpec::Nuclear => prox_nuclear(m, t),
        PenaltySpec::WeightedL1 { column_weights } => prox_weighted_l1(m, t, column_weights),
    }
}
