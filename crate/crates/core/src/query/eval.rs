use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::aggregate::{iou, Mask};
use crate::error::{check_dim, Error, Result};
use crate::model::{dot, norm, RowMatrix};
use crate::solver::{FeatureField, ObservationSet};

/// Masks keyed by `(query, view_id)`.
pub type MaskIndex = BTreeMap<(String, String), Mask>;

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    /// `(query, view_id, iou)` for every evaluated pair.
    pub pairs: Vec<(String, String, f64)>,
    /// Mean IoU per query over its views.
    pub per_query: BTreeMap<String, f64>,
    /// Mean of the per-query means.
    pub miou: f64,
    pub warnings: Vec<String>,
}

impl MiouReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query,view_id,iou\n");
        for (q, v, x) in &self.pairs {
            s.push_str(&format!("{q},{v},{x:.6}\n"));
        }
        for (q, x) in &self.per_query {
            s.push_str(&format!("{q},mean,{x:.6}\n"));
        }
        s.push_str(&format!("all,mean,{:.6}\n", self.miou));
        s
    }
}

/// Mean IoU between predicted and ground-truth masks.
///
/// Pairs without ground truth are skipped with a warning; so are pairs whose
/// ground truth is empty (the object is not visible). A missing prediction
/// counts as an empty mask.
pub fn eval_miou(pred: &MaskIndex, gt: &MaskIndex) -> Result<MiouReport> {
    let mut warnings = Vec::new();
    for key in pred.keys() {
        if !gt.contains_key(key) {
            warnings.push(format!("no ground truth for query '{}' in view '{}'", key.0, key.1));
        }
    }
    let mut pairs = Vec::new();
    let mut by_query: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((q, v), g) in gt {
        if g.count() == 0 {
            continue;
        }
        let x = match pred.get(&(q.clone(), v.clone())) {
            Some(p) => iou(p, g)?,
            None => {
                warnings.push(format!("no prediction for query '{q}' in view '{v}', scored as empty"));
                0.0
            }
        };
        pairs.push((q.clone(), v.clone(), x));
        by_query.entry(q.clone()).or_default().push(x);
    }
    if by_query.is_empty() {
        return Err(Error::invalid("no ground-truth masks to evaluate"));
    }
    let per_query: BTreeMap<String, f64> = by_query
        .into_iter()
        .map(|(q, xs)| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (q, m)
        })
        .collect();
    let miou = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MiouReport {
        pairs,
        per_query,
        miou,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosineReport {
    pub mean: f64,
    pub evaluated: usize,
    /// Rays skipped because the rendered or observed vector has zero norm.
    pub zero_norm: usize,
    /// Rays without an observation (label -1).
    pub unlabeled: usize,
}

/// Mean cosine similarity between rendered per-ray features and observations.
pub fn eval_cosine(rendered: &RowMatrix, gt: &ObservationSet) -> Result<CosineReport> {
    check_dim("rendered rays vs observation rays", gt.rows(), rendered.rows())?;
    check_dim("rendered dimension vs observation dimension", gt.dim(), rendered.cols())?;
    let (mut sum, mut evaluated, mut zero_norm, mut unlabeled) = (0.0, 0, 0, 0);
    for i in 0..gt.rows() {
        let Some(b) = gt.feature(i) else {
            unlabeled += 1;
            continue;
        };
        let r = rendered.row(i);
        let (nr, nb) = (norm(r), norm(b));
        if nr == 0.0 || nb == 0.0 {
            zero_norm += 1;
            continue;
        }
        sum += (dot(r, b) / (nr * nb)).clamp(-1.0, 1.0);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::invalid("no rays with non-zero rendered and observed features"));
    }
    Ok(CosineReport {
        mean: sum / evaluated as f64,
        evaluated,
        zero_norm,
        unlabeled,
    })
}

/// Three-channel visualization of a feature field from its top principal components.
///
/// Each channel is min-max scaled to `[0, 1]` over observed primitives.
/// Channels beyond the feature rank are 0.5; unobserved primitives are 0.
pub fn pca_rgb(x: &FeatureField) -> Result<RowMatrix> {
    let obs: Vec<usize> = (0..x.len()).filter(|&j| x.is_observed(j)).collect();
    if obs.len() < 3 {
        return Err(Error::invalid(format!(
            "PCA visualization needs at least 3 observed primitives, got {}",
            obs.len()
        )));
    }
    let f = x.dim();
    let n = obs.len() as f64;
    let mut mean = vec![0.0; f];
    for &j in &obs {
        for (m, v) in mean.iter_mut().zip(x.feature(j)) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(f, f);
    for &j in &obs {
        let c: Vec<f64> = x.feature(j).iter().zip(&mean).map(|(v, m)| v - m).collect();
        for a in 0..f {
            for b in 0..f {
                cov[(a, b)] += c[a] * c[b] / n;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut out = RowMatrix::zeros(x.len(), 3);
    for ch in 0..3 {
        let usable = ch < f && top > 0.0 && eig.eigenvalues[order[ch]] > 1e-12 * top;
        if !usable {
            for &j in &obs {
                out.row_mut(j)[ch] = 0.5;
            }
            continue;
        }
        let mut axis: Vec<f64> = eig.eigenvectors.column(order[ch]).iter().copied().collect();
        let lead = (0..f).fold(0, |best, k| if axis[k].abs() > axis[best].abs() { k } else { best });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        let proj: Vec<f64> = obs
            .iter()
            .map(|&j| x.feature(j).iter().zip(&mean).zip(&axis).map(|((v, m), a)| (v - m) * a).sum())
            .collect();
        let (lo, hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for (&j, &p) in obs.iter().zip(&proj) {
            out.row_mut(j)[ch] = if hi > lo { (p - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Ok(out)
}
