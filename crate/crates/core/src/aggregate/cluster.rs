use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, RowMatrix};
use crate::rasterize::{render, render_labels, WeightMatrix};
use crate::solver::FeatureField;

/// Density clustering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Neighbors (including the point itself) needed for a core point.
    pub min_points: usize,
    /// Neighborhood radius on the unit sphere; chosen from the data when absent.
    pub eps: Option<f64>,
    /// Quantile of k-nearest-neighbor distances used for automatic `eps`.
    pub eps_quantile: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_points: 10,
            eps: None,
            eps_quantile: 0.95,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_points < 2 {
            return Err(Error::invalid("min_points must be at least 2"));
        }
        if let Some(e) = self.eps {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(Error::invalid(format!("eps must be a finite non-negative number, got {e}")));
            }
        }
        if !(self.eps_quantile > 0.0 && self.eps_quantile <= 1.0) {
            return Err(Error::invalid("eps_quantile must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-primitive cluster labels; -1 marks noise and unobserved primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub min_points: usize,
    /// Radius actually used.
    pub eps: f64,
    pub warning: Option<String>,
}

impl ClusterAssignment {
    /// Wrap externally produced labels in `{-1, 0, .., K-1}`.
    pub fn from_labels(labels: Vec<i32>) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::invalid(format!("cluster label {l} below -1")));
        }
        let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        Ok(ClusterAssignment {
            labels,
            n_clusters,
            min_points: 0,
            eps: 0.0,
            warning: None,
        })
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }
}

/// Unit-normalized copies of the observed, non-zero feature rows.
fn unit_rows(x: &FeatureField) -> (Vec<usize>, RowMatrix) {
    let mut idx = Vec::new();
    let mut data = Vec::new();
    for j in 0..x.len() {
        if !x.is_observed(j) {
            continue;
        }
        let f = x.feature(j);
        let n = norm(f);
        if n > 0.0 {
            idx.push(j);
            data.extend(f.iter().map(|v| v / n));
        }
    }
    let rows = idx.len();
    (idx, RowMatrix::from_vec(rows, x.dim(), data).expect("consistent sizes"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Flat density clustering (DBSCAN) of unit-normalized features.
///
/// Clusters are numbered in discovery order, scanning primitives by index.
pub fn cluster_features(x: &FeatureField, params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let mut labels = vec![-1; x.len()];
    let (idx, pts) = unit_rows(x);
    let n = idx.len();
    let k = params.min_points;
    if n < k {
        return Ok(ClusterAssignment {
            labels,
            n_clusters: 0,
            min_points: k,
            eps: params.eps.unwrap_or(0.0),
            warning: Some(format!(
                "only {n} observed primitives, fewer than min_points = {k}; everything is noise"
            )),
        });
    }

    let mut d = vec![0.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v = dist(pts.row(a), pts.row(b));
            d[a * n + b] = v;
            d[b * n + a] = v;
        }
    }

    let eps = match params.eps {
        Some(e) => e,
        None => {
            // distance to the k-th nearest point, counting the point itself
            let mut kd: Vec<f64> = (0..n)
                .map(|a| {
                    let mut row = d[a * n..(a + 1) * n].to_vec();
                    let (_, v, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
                    *v
                })
                .collect();
            kd.sort_by(f64::total_cmp);
            let rank = ((params.eps_quantile * n as f64).ceil() as usize).clamp(1, n);
            kd[rank - 1]
        }
    };

    let d = &d;
    let neighbors = |a: usize| (0..n).filter(move |&b| d[a * n + b] <= eps);
    let core: Vec<bool> = (0..n).map(|a| neighbors(a).count() >= k).collect();
    let mut local = vec![-1i32; n];
    let mut next = 0i32;
    let mut queue = Vec::new();
    for a in 0..n {
        if local[a] >= 0 || !core[a] {
            continue;
        }
        local[a] = next;
        queue.push(a);
        while let Some(p) = queue.pop() {
            for q in neighbors(p) {
                if local[q] < 0 {
                    local[q] = next;
                    if core[q] {
                        queue.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    for (a, &j) in idx.iter().enumerate() {
        labels[j] = local[a];
    }
    Ok(ClusterAssignment {
        labels,
        n_clusters: next as usize,
        min_points: k,
        eps,
        warning: None,
    })
}

/// Orthogonal encoding of cluster labels as per-primitive vectors, and its decoder.
pub trait LabelEncoding {
    fn encode(&self, gamma: &ClusterAssignment) -> RowMatrix;
    /// Label for one composited score vector.
    fn decode(&self, scores: &[f64]) -> i32;
}

/// One-hot encoding: column 0 is label -1, column `k + 1` is cluster `k`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OneHot;

impl LabelEncoding for OneHot {
    fn encode(&self, gamma: &ClusterAssignment) -> RowMatrix {
        onehot(gamma)
    }

    fn decode(&self, scores: &[f64]) -> i32 {
        let mut best = 0;
        for c in 1..scores.len() {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        best as i32 - 1
    }
}

pub fn onehot(gamma: &ClusterAssignment) -> RowMatrix {
    let mut m = RowMatrix::zeros(gamma.labels.len(), gamma.n_clusters + 1);
    for (j, &l) in gamma.labels.iter().enumerate() {
        m.row_mut(j)[(l + 1) as usize] = 1.0;
    }
    m
}

/// Per-ray cluster label `argmax(A Γ) - 1` under the one-hot encoding.
pub fn project_clusters(a: &WeightMatrix, gamma: &ClusterAssignment) -> Result<Vec<i32>> {
    render_labels(a, &onehot(gamma))
}

/// Per-ray cluster label under an arbitrary encoding; rays without geometry get -1.
pub fn project_clusters_with(a: &WeightMatrix, gamma: &ClusterAssignment, enc: &dyn LabelEncoding) -> Result<Vec<i32>> {
    let g = enc.encode(gamma);
    let scores = render(a, &g, &vec![0.0; g.cols()])?;
    Ok((0..a.rows())
        .map(|i| if a.row(i).is_empty() { -1 } else { enc.decode(scores.row(i)) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(rows: Vec<Vec<f64>>) -> FeatureField {
        let n = rows.len();
        FeatureField::new(RowMatrix::from_rows(&rows).unwrap(), vec![1.0; n]).unwrap()
    }

    #[test]
    fn two_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for c in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for _ in 0..60 {
                rows.push(c.iter().map(|v| v + rng.random_range(-0.02..0.02)).collect());
            }
        }
        let g = cluster_features(&field(rows), &ClusterParams::default()).unwrap();
        assert_eq!(g.n_clusters, 2);
        assert_eq!(g.noise_count(), 0);
        assert!(g.labels[..60].iter().all(|&l| l == 0));
        assert!(g.labels[60..].iter().all(|&l| l == 1));
    }

    #[test]
    fn identical_features_form_one_cluster() {
        let g = cluster_features(&field(vec![vec![0.3, 0.4]; 25]), &ClusterParams::default()).unwrap();
        assert_eq!(g.n_clusters, 1);
        assert!(g.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn isolated_point_is_noise() {
        let mut rows = vec![vec![1.0, 0.0, 0.0]; 40];
        for (k, r) in rows.iter_mut().enumerate() {
            r[1] = k as f64 * 1e-3;
        }
        rows.push(vec![0.0, 0.0, 1.0]);
        let g = cluster_features(&field(rows), &ClusterParams::default()).unwrap();
        assert_eq!(g.labels[40], -1);
        assert_eq!(g.n_clusters, 1);
    }

    #[test]
    fn too_few_points_warns() {
        let g = cluster_features(&field(vec![vec![1.0]; 5]), &ClusterParams::default()).unwrap();
        assert!(g.labels.iter().all(|&l| l == -1));
        assert!(g.warning.is_some());
    }

    #[test]
    fn unobserved_are_noise() {
        let mut rows = vec![vec![1.0, 0.0]; 20];
        rows.push(vec![0.0, 0.0]);
        let n = rows.len();
        let mut cov = vec![1.0; n];
        cov[0] = 0.0;
        let x = FeatureField::new(RowMatrix::from_rows(&rows).unwrap(), cov).unwrap();
        let g = cluster_features(&x, &ClusterParams::default()).unwrap();
        assert_eq!(g.labels[0], -1);
        assert_eq!(g.labels[20], -1);
        assert!(g.labels[1..20].iter().all(|&l| l == 0));
    }

    #[test]
    fn onehot_examples() {
        let g = ClusterAssignment::from_labels(vec![-1, 0, 1]).unwrap();
        let m = onehot(&g);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 1.0]);
        let g = ClusterAssignment::from_labels(vec![-1, -1]).unwrap();
        assert_eq!(onehot(&g).row(1), &[1.0]);
    }

    #[test]
    fn generic_path_matches_render_labels() {
        let a = WeightMatrix::from_rows_single_view(
            vec![vec![(0, 0.6), (1, 0.32)], vec![], vec![(2, 0.5), (1, 0.5)], vec![(0, 0.9)]],
            3,
        )
        .unwrap();
        let g = ClusterAssignment::from_labels(vec![1, 2, -1]).unwrap();
        let direct = project_clusters(&a, &g).unwrap();
        assert_eq!(direct, vec![1, -1, -1, 1]);
        assert_eq!(project_clusters_with(&a, &g, &OneHot).unwrap(), direct);
    }

    proptest! {
        #[test]
        fn onehot_round_trip(labels in proptest::collection::vec(-1i32..6, 1..50)) {
            let g = ClusterAssignment::from_labels(labels.clone()).unwrap();
            let m = onehot(&g);
            for (j, &l) in labels.iter().enumerate() {
                prop_assert_eq!(m.row(j).iter().sum::<f64>(), 1.0);
                prop_assert_eq!(OneHot.decode(m.row(j)), l);
            }
        }
    }
}
