//! Dense least-squares reference solver for desk-scale problems.
//!
//! Solves `min ‖A x - B‖²_F` through the damped normal equations
//! `(AᵀA + εI) x = AᵀB`, then applies iterative refinement with the
//! undamped residual. Starting from zero, refinement never leaves the row
//! space of `A`, so rank-deficient problems converge toward the
//! minimum-norm solution.

use nalgebra::DMatrix;

use super::field::{FeatureField, ObservationSet};
use crate::error::{Error, Result};
use crate::model::RowMatrix;
use crate::rasterize::WeightMatrix;

pub const ORACLE_MAX_PRIMITIVES: usize = 5000;
pub const ORACLE_DAMPING: f64 = 1e-10;
/// Target `‖Aᵀ(Ax - B)‖ ≤ tol · ‖AᵀB‖` per channel.
pub const ORACLE_GRADIENT_TOL: f64 = 1e-8;
const MAX_REFINEMENTS: usize = 60;

/// Convergence record of one oracle solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleStats {
    pub refinements: usize,
    /// Worst per-channel `‖Aᵀ(Ax - B)‖ / ‖AᵀB‖`.
    pub relative_gradient: f64,
}

pub fn lsq_oracle(a: &WeightMatrix, b: &ObservationSet) -> Result<FeatureField> {
    lsq_oracle_with_stats(a, b).map(|(x, _)| x)
}

pub fn lsq_oracle_with_stats(a: &WeightMatrix, b: &ObservationSet) -> Result<(FeatureField, OracleStats)> {
    b.check_aligned(a)?;
    let p = a.cols();
    if p > ORACLE_MAX_PRIMITIVES {
        return Err(Error::ScaleLimit {
            primitives: p,
            limit: ORACLE_MAX_PRIMITIVES,
        });
    }
    let f = b.dim();
    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DMatrix::<f64>::zeros(p, f);
    let mut coverage = vec![0.0; p];
    let mut any = false;
    for i in 0..a.rows() {
        let Some(obs) = b.feature(i) else { continue };
        let row = a.row(i);
        for (j, wj) in row.iter() {
            any = true;
            coverage[j] += wj;
            for (k, wk) in row.iter() {
                normal[(j, k)] += wj * wk;
            }
            for c in 0..f {
                rhs[(j, c)] += wj * obs[c];
            }
        }
    }
    if !any {
        return Err(Error::NoObservations);
    }
    for j in 0..p {
        normal[(j, j)] += ORACLE_DAMPING;
    }
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvariantViolation("damped normal matrix is not positive definite".into()))?;

    let b_norms: Vec<f64> = (0..f).map(|c| rhs.column(c).norm()).collect();
    let mut x = chol.solve(&rhs);
    let mut stats = OracleStats {
        refinements: 0,
        relative_gradient: f64::INFINITY,
    };
    // refine until the undamped gradient stops shrinking
    let mut best = x.clone();
    loop {
        let grad = &rhs - (&normal * &x - &x * ORACLE_DAMPING);
        let rel = (0..f)
            .map(|c| {
                let g = grad.column(c).norm();
                if b_norms[c] > 0.0 {
                    g / b_norms[c]
                } else {
                    g
                }
            })
            .fold(0.0, f64::max);
        if rel >= stats.relative_gradient {
            x = best;
            break;
        }
        stats.relative_gradient = rel;
        if rel <= 1e-15 || stats.refinements >= MAX_REFINEMENTS {
            break;
        }
        best = x.clone();
        x += chol.solve(&grad);
        stats.refinements += 1;
    }
    if stats.relative_gradient > ORACLE_GRADIENT_TOL {
        log::warn!(
            "least-squares oracle stopped at relative gradient {:.3e} after {} refinements",
            stats.relative_gradient,
            stats.refinements
        );
    }

    let mut values = RowMatrix::zeros(p, f);
    for j in 0..p {
        for c in 0..f {
            values.row_mut(j)[c] = x[(j, c)];
        }
    }
    Ok((FeatureField::new(values, coverage)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::lift::tests::dense;
    use crate::solver::{lift_rowsum, loss_true, Loss};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_observations_of_one_primitive() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 1.0)], vec![(0, 1.0)]], 1).unwrap();
        let b = dense(&[vec![0.0], vec![2.0]]);
        let x = lsq_oracle(&a, &b).unwrap();
        assert_abs_diff_eq!(x.feature(0)[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn consistent_square_system_is_solved_exactly() {
        let a = WeightMatrix::from_rows_single_view(
            vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 0.9)], vec![(0, 0.3), (2, 0.6)]],
            3,
        )
        .unwrap();
        let truth = [1.5, -2.0, 0.25];
        let b: Vec<Vec<f64>> = (0..3)
            .map(|i| vec![a.row(i).iter().map(|(j, w)| w * truth[j]).sum()])
            .collect();
        let b = dense(&b);
        let (x, stats) = lsq_oracle_with_stats(&a, &b).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(x.feature(j)[0], truth[j], epsilon = 1e-8);
        }
        assert!(stats.relative_gradient <= ORACLE_GRADIENT_TOL);
        assert!(loss_true(&a, &b, &x, Loss::L2).unwrap() < 1e-16);
    }

    #[test]
    fn beats_rowsum_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, p) = (200, 40);
        let rows: Vec<Vec<(u32, f64)>> = (0..r)
            .map(|i| {
                let mut js = vec![(i % p) as u32];
                for _ in 0..rng.random_range(0..3) {
                    let j = rng.random_range(0..p) as u32;
                    if !js.contains(&j) {
                        js.push(j);
                    }
                }
                let ws: Vec<f64> = js.iter().map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = ws.iter().sum();
                js.into_iter().zip(ws).map(|(j, w)| (j, w / s)).collect()
            })
            .collect();
        let a = WeightMatrix::from_rows_single_view(rows, p).unwrap();
        let b: Vec<Vec<f64>> = (0..r).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let b = dense(&b);
        let (xo, stats) = lsq_oracle_with_stats(&a, &b).unwrap();
        assert!(stats.relative_gradient <= ORACLE_GRADIENT_TOL, "{stats:?}");
        let xr = lift_rowsum(&a, &b).unwrap();
        assert!(loss_true(&a, &b, &xo, Loss::L2).unwrap() <= loss_true(&a, &b, &xr, Loss::L2).unwrap());
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // two primitives always seen together with equal weight
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.5), (1, 0.5)]; 3], 2).unwrap();
        let b = dense(&[vec![1.0], vec![1.0], vec![1.0]]);
        let x = lsq_oracle(&a, &b).unwrap();
        assert_abs_diff_eq!(x.feature(0)[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x.feature(1)[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn scale_limit() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 1.0)]], ORACLE_MAX_PRIMITIVES + 1).unwrap();
        let b = dense(&[vec![1.0]]);
        assert!(matches!(lsq_oracle(&a, &b), Err(Error::ScaleLimit { .. })));
    }
}
