use super::field::{FeatureField, ObservationSet};
use super::lift::lift_rowsum;
use super::loss::{loss_surrogate, loss_true, Loss};
use super::oracle::lsq_oracle;
use crate::error::{check_dim, Error, Result};
use crate::model::norm;
use crate::rasterize::WeightMatrix;

/// Rays whose mean residual falls below this get zero dispersion.
pub const BETA_MU_EPS: f64 = 1e-12;

/// Per-ray dispersion of residual distances and its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaReport {
    pub per_row: Vec<f64>,
    /// Weighted mean distance `μ_i` per row (0 for skipped rows).
    pub mu: Vec<f64>,
    pub max: f64,
}

/// Dispersion `β_i = σ²_i / μ²_i` of the distances `‖x_j - B_i‖` along each ray,
/// computed with the row rescaled to sum to one.
///
/// Empty and unobserved rows are skipped (β_i = 0).
pub fn beta(a: &WeightMatrix, b: &ObservationSet, x: &FeatureField) -> Result<BetaReport> {
    b.check_aligned(a)?;
    check_dim("field primitives vs matrix columns", a.cols(), x.len())?;
    check_dim("field dimension vs observation dimension", b.dim(), x.dim())?;
    let mut per_row = vec![0.0; a.rows()];
    let mut mu = vec![0.0; a.rows()];
    let mut diff = vec![0.0; b.dim()];
    for i in 0..a.rows() {
        let row = a.row(i);
        let s = row.sum();
        let Some(obs) = b.feature(i) else { continue };
        if s <= 0.0 {
            continue;
        }
        let (mut m1, mut m2) = (0.0, 0.0);
        for (j, w) in row.iter() {
            for ((d, xv), o) in diff.iter_mut().zip(x.feature(j)).zip(obs) {
                *d = xv - o;
            }
            let delta = norm(&diff);
            let wn = w / s;
            m1 += wn * delta;
            m2 += wn * delta * delta;
        }
        mu[i] = m1;
        if m1 >= BETA_MU_EPS {
            // clamp rounding noise on constant-distance rows
            per_row[i] = ((m2 - m1 * m1) / (m1 * m1)).max(0.0);
        }
    }
    let max = per_row.iter().copied().fold(0.0, f64::max);
    Ok(BetaReport { per_row, mu, max })
}

/// Loss comparison between the closed-form lift `x'` and the least-squares optimum `x̂`.
///
/// All quantities use the row-normalized operator and squared L2 losses.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub loss_true_xprime: f64,
    pub loss_surrogate_xprime: f64,
    pub loss_surrogate_opt: f64,
    pub loss_true_opt: f64,
    pub beta: f64,
    pub beta_per_row: Vec<f64>,
    /// `L(x') / L(x̂)`, with 0/0 read as 1.
    pub ratio: f64,
    /// Whether `L(x') ≤ (1 + β) L(x̂)` held on this instance.
    pub within_beta_bound: bool,
}

/// Relative slack allowed for rounding when asserting the loss chain.
const CHAIN_SLACK: f64 = 1e-12;
/// Loss below this fraction of `Σ‖B_i‖²` counts as an exact fit.
const EXACT_FIT_EPS: f64 = 1e-20;

pub fn bound_report(a: &WeightMatrix, b: &ObservationSet) -> Result<BoundReport> {
    b.check_aligned(a)?;
    let an = a.row_normalized();
    let xp = lift_rowsum(&an, b)?;
    let xh = lsq_oracle(&an, b)?;
    let loss_true_xprime = loss_true(&an, b, &xp, Loss::L2)?;
    let loss_surrogate_xprime = loss_surrogate(&an, b, &xp, Loss::L2)?;
    let loss_surrogate_opt = loss_surrogate(&an, b, &xh, Loss::L2)?;
    let loss_true_opt = loss_true(&an, b, &xh, Loss::L2)?;
    let br = beta(&an, b, &xh)?;

    let slack = CHAIN_SLACK * loss_surrogate_opt.max(1e-300);
    if loss_true_xprime > loss_surrogate_xprime + slack {
        return Err(Error::InvariantViolation(format!(
            "L(x') = {loss_true_xprime} exceeds J(x') = {loss_surrogate_xprime}"
        )));
    }
    if loss_surrogate_xprime > loss_surrogate_opt + slack {
        return Err(Error::InvariantViolation(format!(
            "J(x') = {loss_surrogate_xprime} exceeds J(x_hat) = {loss_surrogate_opt}"
        )));
    }
    // both losses at rounding level of the data: an exact fit, ratio 1
    let energy: f64 = (0..b.rows()).filter_map(|i| b.feature(i)).map(|f| f.iter().map(|v| v * v).sum::<f64>()).sum();
    let zero = EXACT_FIT_EPS * energy.max(f64::MIN_POSITIVE);
    let ratio = if loss_true_opt <= zero && loss_true_xprime <= zero {
        1.0
    } else if loss_true_opt > 0.0 {
        loss_true_xprime / loss_true_opt
    } else {
        f64::INFINITY
    };
    Ok(BoundReport {
        loss_true_xprime,
        loss_surrogate_xprime,
        loss_surrogate_opt,
        loss_true_opt,
        beta: br.max,
        within_beta_bound: ratio <= 1.0 + br.max,
        beta_per_row: br.per_row,
        ratio,
    })
}
