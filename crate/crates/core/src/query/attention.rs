use rayon::prelude::*;

use crate::aggregate::Mask;
use crate::error::{check_dim, Error, Result};
use crate::model::{dot, norm, RowMatrix};
use crate::rasterize::{render, WeightMatrix};
use crate::solver::FeatureField;

/// Score given to unobserved primitives and to pixels no primitive covers.
pub const BACKGROUND_SCORE: f64 = -1.0;

/// Named query vector, unit-normalized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub name: String,
    raw: Vec<f64>,
    vector: Vec<f64>,
}

impl QueryEmbedding {
    pub fn new(name: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("query '{name}' must be a non-empty finite vector")));
        }
        let n = norm(&vector);
        if n == 0.0 {
            return Err(Error::invalid(format!("query '{name}' has zero norm")));
        }
        Ok(QueryEmbedding {
            name,
            vector: vector.iter().map(|v| v / n).collect(),
            raw: vector,
        })
    }

    /// The vector as given, before normalization.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

/// Cosine similarity of every primitive feature to the query; -1 for unobserved or zero features.
pub fn attention_scores(x: &FeatureField, q: &QueryEmbedding) -> Result<Vec<f64>> {
    check_dim("query dimension vs feature dimension", x.dim(), q.vector.len())?;
    Ok((0..x.len())
        .into_par_iter()
        .map(|j| {
            let f = x.feature(j);
            let n = norm(f);
            if !x.is_observed(j) || n == 0.0 {
                BACKGROUND_SCORE
            } else {
                (dot(f, &q.vector) / n).clamp(-1.0, 1.0)
            }
        })
        .collect())
}

/// Raw composited attention scores for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub raw: Vec<f64>,
    /// Whether any primitive contributes to the pixel.
    pub covered: Vec<bool>,
    /// Range of raw scores over covered pixels, for display scaling only.
    pub min: f64,
    pub max: f64,
}

impl AttentionMap {
    pub fn covered_values(&self) -> Vec<f64> {
        self.raw
            .iter()
            .zip(&self.covered)
            .filter(|(_, &c)| c)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Scores rescaled to `[0, 1]` over the covered range; uncovered pixels map to 0.
    pub fn display(&self) -> Vec<f64> {
        let span = self.max - self.min;
        self.raw
            .iter()
            .zip(&self.covered)
            .map(|(&v, &c)| {
                if !c {
                    0.0
                } else if span > 0.0 {
                    ((v - self.min) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            })
            .collect()
    }
}

/// Composite per-primitive scores into every view, with background score -1.
pub fn render_attention(a: &WeightMatrix, scores: &[f64]) -> Result<Vec<AttentionMap>> {
    let x = RowMatrix::from_vec(scores.len(), 1, scores.to_vec())?;
    let c = render(a, &x, &[BACKGROUND_SCORE])?;
    Ok(a.views()
        .iter()
        .map(|v| {
            let raw: Vec<f64> = c.as_slice()[v.rows()].to_vec();
            let covered: Vec<bool> = v.rows().map(|i| !a.row(i).is_empty()).collect();
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for (&r, &cv) in raw.iter().zip(&covered) {
                if cv {
                    min = min.min(r);
                    max = max.max(r);
                }
            }
            if min > max {
                min = BACKGROUND_SCORE;
                max = BACKGROUND_SCORE;
            }
            AttentionMap {
                view_id: v.view_id.clone(),
                width: v.width,
                height: v.height,
                raw,
                covered,
                min,
                max,
            }
        })
        .collect())
}

/// Warning text when attention is projected with a different λ than lifting used.
pub fn lambda_warning(a: &WeightMatrix, lift_lambda: f64) -> Option<String> {
    ((a.lambda_used() - lift_lambda).abs() > 1e-12).then(|| {
        format!(
            "attention projected with lambda {} but features were lifted with lambda {}",
            a.lambda_used(),
            lift_lambda
        )
    })
}

/// Pixels whose raw score reaches `threshold`.
pub fn segment(map: &AttentionMap, threshold: f64) -> Mask {
    Mask {
        width: map.width,
        height: map.height,
        bits: map.raw.iter().map(|&v| v >= threshold).collect(),
    }
}
