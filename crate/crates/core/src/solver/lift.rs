use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{FeatureField, ObservationSet, COVERAGE_EPS};
use crate::error::{Error, Result};
use crate::model::RowMatrix;
use crate::rasterize::WeightMatrix;

/// Weighting used by the closed-form lift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LiftMode {
    /// `x_j = Σ A_ij B_i / Σ A_ij`
    #[default]
    RowSum,
    /// `x_j = Σ A²_ij B_i / Σ A²_ij`
    #[serde(rename = "rowsum2", alias = "rowsum-squared")]
    RowSumSquared,
}

impl LiftMode {
    #[inline]
    pub(crate) fn weight(self, w: f64) -> f64 {
        match self {
            LiftMode::RowSum => w,
            LiftMode::RowSumSquared => w * w,
        }
    }
}

impl std::str::FromStr for LiftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rowsum" => Ok(LiftMode::RowSum),
            "rowsum2" | "rowsum-squared" => Ok(LiftMode::RowSumSquared),
            other => Err(Error::invalid(format!("unknown lift mode '{other}' (expected rowsum or rowsum2)"))),
        }
    }
}

impl std::fmt::Display for LiftMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LiftMode::RowSum => "rowsum",
            LiftMode::RowSumSquared => "rowsum2",
        })
    }
}

/// Weighted-mean lift: the stationary point of the per-entry surrogate loss.
pub fn lift_rowsum(a: &WeightMatrix, b: &ObservationSet) -> Result<FeatureField> {
    lift(a, b, LiftMode::RowSum)
}

/// Lift with squared weights, for matrices built with polarized opacities.
pub fn lift_rowsum_squared(a: &WeightMatrix, b: &ObservationSet) -> Result<FeatureField> {
    lift(a, b, LiftMode::RowSumSquared)
}

pub fn lift(a: &WeightMatrix, b: &ObservationSet, mode: LiftMode) -> Result<FeatureField> {
    b.check_aligned(a)?;
    let f = b.dim();
    let columns = a.columns();
    let mut values = RowMatrix::zeros(a.cols(), f);
    let mut coverage = vec![0.0; a.cols()];
    // each primitive accumulates its column in ascending row order
    values
        .as_mut_slice()
        .par_chunks_mut(f.max(1))
        .zip(coverage.par_iter_mut())
        .enumerate()
        .for_each(|(j, (num, den))| {
            let mut d = 0.0;
            for (i, w) in columns.column(j) {
                if let Some(obs) = b.feature(i) {
                    let ww = mode.weight(w);
                    d += ww;
                    for (n, o) in num.iter_mut().zip(obs) {
                        *n += ww * o;
                    }
                }
            }
            if d >= COVERAGE_EPS {
                num.iter_mut().for_each(|n| *n /= d);
            }
            *den = d;
        });
    if coverage.iter().all(|&c| c == 0.0) {
        return Err(Error::NoObservations);
    }
    FeatureField::new(values, coverage)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rasterize::ViewRange;
    use approx::assert_abs_diff_eq;

    pub(crate) fn dense(rows: &[Vec<f64>]) -> ObservationSet {
        let m = RowMatrix::from_rows(rows).unwrap();
        let views = vec![ViewRange {
            view_id: "all".into(),
            start: 0,
            width: rows.len() as u32,
            height: 1,
        }];
        ObservationSet::dense(m, views).unwrap()
    }

    #[test]
    fn one_to_one_lift_copies_observations() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(2, 1.0)]], 4).unwrap();
        let b = dense(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let x = lift_rowsum(&a, &b).unwrap();
        assert_eq!(x.feature(0), &[3.0, 4.0]);
        assert_eq!(x.feature(1), &[1.0, 2.0]);
        assert_eq!(x.feature(2), &[5.0, 6.0]);
        assert!(!x.is_observed(3));
        assert_eq!(x.feature(3), &[0.0, 0.0]);
    }

    #[test]
    fn two_unit_rays_average() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 1.0)], vec![(0, 1.0)]], 1).unwrap();
        let b = dense(&[vec![1.0], vec![4.0]]);
        assert_eq!(lift_rowsum(&a, &b).unwrap().feature(0), &[2.5]);
    }

    #[test]
    fn weighted_mean() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.25)], vec![(0, 0.75)]], 1).unwrap();
        let b = dense(&[vec![0.0], vec![1.0]]);
        assert_abs_diff_eq!(lift_rowsum(&a, &b).unwrap().feature(0)[0], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn squared_weights() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.5)], vec![(0, 1.0)]], 1).unwrap();
        let b = dense(&[vec![0.0], vec![1.0]]);
        assert_abs_diff_eq!(lift_rowsum_squared(&a, &b).unwrap().feature(0)[0], 0.8, epsilon = 1e-15);

        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.3)]], 1).unwrap();
        let b = dense(&[vec![-2.5]]);
        assert_eq!(lift_rowsum_squared(&a, &b).unwrap().feature(0), &[-2.5]);
    }

    #[test]
    fn binary_weights_make_modes_agree() {
        let a = WeightMatrix::from_rows_single_view(
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, 1.0)], vec![]],
            2,
        )
        .unwrap();
        let b = dense(&[vec![1.0], vec![2.0], vec![7.0], vec![9.0]]);
        assert_eq!(lift_rowsum(&a, &b).unwrap(), lift_rowsum_squared(&a, &b).unwrap());
    }

    #[test]
    fn all_empty_rows_is_an_error() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![], vec![]], 3).unwrap();
        let b = dense(&[vec![1.0], vec![2.0]]);
        assert!(matches!(lift_rowsum(&a, &b), Err(Error::NoObservations)));
    }

    #[test]
    fn unlabeled_rays_are_skipped() {
        use crate::solver::LabelTable;
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 1.0)], vec![(0, 1.0)]], 1).unwrap();
        let mut t = LabelTable::new();
        t.insert(0, vec![5.0]);
        let views = a.views().to_vec();
        let b = ObservationSet::labeled(vec![0, -1], vec![t], 1, views).unwrap();
        assert_eq!(lift_rowsum(&a, &b).unwrap().feature(0), &[5.0]);
    }

    #[test]
    fn misaligned_observations_rejected() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 1.0)]], 1).unwrap();
        let b = dense(&[vec![1.0], vec![2.0]]);
        assert!(lift_rowsum(&a, &b).is_err());
    }
}
