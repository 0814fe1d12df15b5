use rayon::prelude::*;

use super::field::{FeatureField, ObservationSet};
use crate::error::{check_dim, Error, Result};
use crate::model::RowMatrix;
use crate::rasterize::WeightMatrix;

/// Convex per-ray penalty applied to a residual vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Sum of absolute components.
    L1,
    /// Squared Euclidean norm.
    L2,
    /// Component-wise Huber with transition point `delta`.
    Huber(f64),
}

impl Loss {
    pub fn eval(&self, r: &[f64]) -> f64 {
        match *self {
            Loss::L1 => r.iter().map(|v| v.abs()).sum(),
            Loss::L2 => r.iter().map(|v| v * v).sum(),
            Loss::Huber(d) => r
                .iter()
                .map(|v| {
                    let a = v.abs();
                    if a <= d {
                        0.5 * a * a
                    } else {
                        d * (a - 0.5 * d)
                    }
                })
                .sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Loss::Huber(d) if !(d > 0.0) => Err(Error::invalid("Huber delta must be positive")),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Loss::L1 => f.write_str("L1"),
            Loss::L2 => f.write_str("L2"),
            Loss::Huber(d) => write!(f, "Huber({d})"),
        }
    }
}

fn check(a: &WeightMatrix, b: &ObservationSet, x: &FeatureField) -> Result<()> {
    b.check_aligned(a)?;
    check_dim("field primitives vs matrix columns", a.cols(), x.len())?;
    check_dim("field dimension vs observation dimension", b.dim(), x.dim())
}

/// Sum of per-row values, reduced sequentially so the total does not depend on threading.
fn ordered_sum(per_row: Vec<f64>) -> f64 {
    per_row.into_iter().sum()
}

/// `L(x) = Σ_i loss((A x)_i - B_i)` over observed rays.
pub fn loss_true(a: &WeightMatrix, b: &ObservationSet, x: &FeatureField, loss: Loss) -> Result<f64> {
    check(a, b, x)?;
    loss.validate()?;
    let f = b.dim();
    let per_row: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0; f],
            |r, i| {
                let Some(obs) = b.feature(i) else { return 0.0 };
                r.iter_mut().zip(obs).for_each(|(v, o)| *v = -o);
                for (j, w) in a.row(i).iter() {
                    for (v, xj) in r.iter_mut().zip(x.feature(j)) {
                        *v += w * xj;
                    }
                }
                loss.eval(r)
            },
        )
        .collect();
    Ok(ordered_sum(per_row))
}

/// `J(x) = Σ_i Σ_j A_ij loss(x_j - B_i)` over observed rays.
pub fn loss_surrogate(a: &WeightMatrix, b: &ObservationSet, x: &FeatureField, loss: Loss) -> Result<f64> {
    check(a, b, x)?;
    loss.validate()?;
    let f = b.dim();
    let per_row: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0; f],
            |r, i| {
                let Some(obs) = b.feature(i) else { return 0.0 };
                let mut acc = 0.0;
                for (j, w) in a.row(i).iter() {
                    for ((v, xj), o) in r.iter_mut().zip(x.feature(j)).zip(obs) {
                        *v = xj - o;
                    }
                    acc += w * loss.eval(r);
                }
                acc
            },
        )
        .collect();
    Ok(ordered_sum(per_row))
}

/// Gradient of the surrogate, `Σ_i A_ij (x_j - B_i)` per primitive (L2, up to the factor 2).
pub fn surrogate_gradient(a: &WeightMatrix, b: &ObservationSet, x: &FeatureField) -> Result<RowMatrix> {
    check(a, b, x)?;
    let f = b.dim();
    let columns = a.columns();
    let mut g = RowMatrix::zeros(a.cols(), f);
    g.as_mut_slice()
        .par_chunks_mut(f.max(1))
        .enumerate()
        .for_each(|(j, gj)| {
            for (i, w) in columns.column(j) {
                if let Some(obs) = b.feature(i) {
                    for ((gv, xv), o) in gj.iter_mut().zip(x.feature(j)).zip(obs) {
                        *gv += w * (xv - o);
                    }
                }
            }
        });
    Ok(g)
}
