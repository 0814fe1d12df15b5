use rayon::prelude::*;

use super::WeightMatrix;
use crate::error::{check_dim, Error, Result};
use crate::model::RowMatrix;

/// Composite per-primitive values along every ray, filling the uncovered
/// remainder of each row with `background`.
pub fn render(a: &WeightMatrix, x: &RowMatrix, background: &[f64]) -> Result<RowMatrix> {
    check_dim("feature rows vs matrix columns", a.cols(), x.rows())?;
    check_dim("background dimension", x.cols(), background.len())?;
    let f = x.cols();
    let mut out = RowMatrix::zeros(a.rows(), f);
    if f == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(f)
        .enumerate()
        .for_each(|(i, dst)| {
            let row = a.row(i);
            let mut mass = 0.0;
            for (j, w) in row.iter() {
                mass += w;
                for (d, v) in dst.iter_mut().zip(x.row(j)) {
                    *d += w * v;
                }
            }
            let rest = 1.0 - mass;
            for (d, b) in dst.iter_mut().zip(background) {
                *d += rest * b;
            }
        });
    Ok(out)
}

/// Per-ray label `argmax(A Γ) - 1`. Column 0 of `gamma` encodes label -1.
///
/// Ties go to the lower column; empty rows map to -1.
pub fn render_labels(a: &WeightMatrix, gamma: &RowMatrix) -> Result<Vec<i32>> {
    check_dim("encoding rows vs matrix columns", a.cols(), gamma.rows())?;
    let k = gamma.cols();
    if k == 0 {
        return Err(Error::invalid("label encoding has no columns"));
    }
    Ok((0..a.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0; k],
            |scores, i| {
                let row = a.row(i);
                if row.is_empty() {
                    return -1;
                }
                scores.iter_mut().for_each(|s| *s = 0.0);
                for (j, w) in row.iter() {
                    for (s, g) in scores.iter_mut().zip(gamma.row(j)) {
                        if *g != 0.0 {
                            *s += w * g;
                        }
                    }
                }
                let mut best = 0;
                for c in 1..k {
                    if scores[c] > scores[best] {
                        best = c;
                    }
                }
                best as i32 - 1
            },
        )
        .collect())
}
