use crate::error::{Error, Result};
use crate::rasterize::WeightMatrix;

/// Row-sum statistics of one view, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSumStats {
    pub view_id: String,
    pub mean: f64,
    pub std: f64,
    /// Rays with at least one contributing primitive.
    pub covered: usize,
}

/// Mean and population standard deviation of `Σ_j A_ij` over covered rays, per view.
pub fn alpha_sum_stats(a: &WeightMatrix) -> Result<Vec<AlphaSumStats>> {
    if a.rows() == 0 {
        return Err(Error::invalid("weight matrix has no rows"));
    }
    Ok(a.views()
        .iter()
        .map(|v| {
            let sums: Vec<f64> = v.rows().filter(|&i| !a.row(i).is_empty()).map(|i| 100.0 * a.row_sum(i)).collect();
            let n = sums.len();
            let (mean, std) = if n == 0 {
                (0.0, 0.0)
            } else {
                let m = sums.iter().sum::<f64>() / n as f64;
                let var = sums.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n as f64;
                (m, var.sqrt())
            };
            AlphaSumStats {
                view_id: v.view_id.clone(),
                mean,
                std,
                covered: n,
            }
        })
        .collect())
}

/// Mean row sum over all covered rays of all views, in percent.
pub fn overall_alpha_mean(a: &WeightMatrix) -> f64 {
    let sums: Vec<f64> = (0..a.rows()).filter(|&i| !a.row(i).is_empty()).map(|i| a.row_sum(i)).collect();
    if sums.is_empty() {
        0.0
    } else {
        100.0 * sums.iter().sum::<f64>() / sums.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rows_give_hundred_percent() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.25), (1, 0.75)], vec![(1, 1.0)], vec![]], 2).unwrap();
        let s = alpha_sum_stats(&a).unwrap();
        assert_eq!(s[0].mean, 100.0);
        assert_eq!(s[0].std, 0.0);
        assert_eq!(s[0].covered, 2);
    }

    #[test]
    fn mixed_rows() {
        let a = WeightMatrix::from_rows_single_view(vec![vec![(0, 0.5)], vec![(0, 1.0)]], 1).unwrap();
        let s = &alpha_sum_stats(&a).unwrap()[0];
        assert!((s.mean - 75.0).abs() < 1e-12);
        assert!((s.std - 25.0).abs() < 1e-12);
        assert!((overall_alpha_mean(&a) - 75.0).abs() < 1e-12);
    }
}
