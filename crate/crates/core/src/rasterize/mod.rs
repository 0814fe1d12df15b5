//! Sparse weight construction by depth-sorted alpha compositing, and the
//! forward renders (features, scalar scores, labels) that consume it.

mod project;
mod render;
pub(crate) mod weights;

pub use project::{kernel_eval, project_primitive, ProjectedFootprint, NEAR_PLANE};
pub use render::{render, render_labels};
pub use weights::build_weight_matrix;
pub(crate) use weights::prepare_view;

use crate::error::{Error, Result};

/// Contiguous block of rows belonging to one camera view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewRange {
    pub view_id: String,
    pub start: usize,
    pub width: u32,
    pub height: u32,
}

impl ViewRange {
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Check that view ranges tile `0..rows` in order.
pub(crate) fn validate_views(views: &[ViewRange], rows: usize) -> Result<()> {
    let mut next = 0;
    for v in views {
        if v.start != next {
            return Err(Error::invalid(format!(
                "view {} starts at row {} but previous views end at {}",
                v.view_id, v.start, next
            )));
        }
        next += v.len();
    }
    if next != rows {
        return Err(Error::DimensionMismatch {
            what: "rows covered by views",
            expected: rows,
            got: next,
        });
    }
    Ok(())
}

/// One row of a [`WeightMatrix`]: primitive indices in compositing order and their weights.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub prims: &'a [u32],
    pub weights: &'a [f64],
}

impl<'a> RowView<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        let prims = self.prims;
        let weights = self.weights;
        prims.iter().zip(weights).map(|(&p, &w)| (p as usize, w))
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }
}

/// Sparse ray-by-primitive compositing weights in CSR layout.
///
/// Every weight lies in `(0, 1]`, every row sums to at most `1 + 1e-6`, and a
/// primitive appears at most once per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    row_ptr: Vec<usize>,
    prims: Vec<u32>,
    weights: Vec<f64>,
    cols: usize,
    views: Vec<ViewRange>,
    lambda_used: f64,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl WeightMatrix {
    /// Assemble from per-row entry lists, validating every invariant.
    pub fn from_rows(
        rows: Vec<Vec<(u32, f64)>>,
        cols: usize,
        views: Vec<ViewRange>,
        lambda_used: f64,
    ) -> Result<Self> {
        validate_views(&views, rows.len())?;
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut prims = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        row_ptr.push(0);
        let mut seen = vec![usize::MAX; cols];
        for (i, row) in rows.into_iter().enumerate() {
            let mut sum = 0.0;
            for (p, w) in row {
                let pj = p as usize;
                if pj >= cols {
                    return Err(Error::invalid(format!("row {i}: primitive {p} out of range ({cols} columns)")));
                }
                if !(w > 0.0 && w <= 1.0) {
                    return Err(Error::invalid(format!("row {i}: weight {w} outside (0, 1]")));
                }
                if seen[pj] == i {
                    return Err(Error::invalid(format!("row {i}: primitive {p} appears twice")));
                }
                seen[pj] = i;
                sum += w;
                prims.push(p);
                weights.push(w);
            }
            if sum > 1.0 + ROW_SUM_TOLERANCE {
                return Err(Error::invalid(format!("row {i}: weights sum to {sum} > 1")));
            }
            row_ptr.push(prims.len());
        }
        Ok(WeightMatrix {
            row_ptr,
            prims,
            weights,
            cols,
            views,
            lambda_used,
        })
    }

    /// Convenience constructor treating all rows as a single `rows x 1` view.
    pub fn from_rows_single_view(rows: Vec<Vec<(u32, f64)>>, cols: usize) -> Result<Self> {
        let n = rows.len();
        let views = vec![ViewRange {
            view_id: "all".into(),
            start: 0,
            width: n as u32,
            height: if n == 0 { 0 } else { 1 },
        }];
        WeightMatrix::from_rows(rows, cols, views, 1.0)
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.prims.len()
    }

    pub fn lambda_used(&self) -> f64 {
        self.lambda_used
    }

    pub fn views(&self) -> &[ViewRange] {
        &self.views
    }

    pub fn view(&self, view_id: &str) -> Option<&ViewRange> {
        self.views.iter().find(|v| v.view_id == view_id)
    }

    pub fn row(&self, i: usize) -> RowView<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        RowView {
            prims: &self.prims[a..b],
            weights: &self.weights[a..b],
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row_sum(i)).collect()
    }

    /// Same sparsity, each non-empty row divided by its sum.
    pub fn row_normalized(&self) -> WeightMatrix {
        let mut out = self.clone();
        for i in 0..self.rows() {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let s: f64 = self.weights[a..b].iter().sum();
            if s > 0.0 {
                for w in &mut out.weights[a..b] {
                    *w = (*w / s).min(1.0);
                }
            }
        }
        out
    }

    /// Column-major index: for each primitive, the (row, weight) pairs in ascending row order.
    pub fn columns(&self) -> ColumnIndex {
        let mut counts = vec![0usize; self.cols + 1];
        for &p in &self.prims {
            counts[p as usize + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut rows = vec![0u32; self.nnz()];
        let mut weights = vec![0.0; self.nnz()];
        for i in 0..self.rows() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.prims[k] as usize;
                let dst = fill[j];
                rows[dst] = i as u32;
                weights[dst] = self.weights[k];
                fill[j] += 1;
            }
        }
        ColumnIndex {
            col_ptr,
            rows,
            weights,
        }
    }

    /// Bitwise equality, including weight bit patterns and view layout.
    pub fn bit_identical(&self, other: &WeightMatrix) -> bool {
        self.row_ptr == other.row_ptr
            && self.prims == other.prims
            && self.cols == other.cols
            && self.views == other.views
            && self.lambda_used.to_bits() == other.lambda_used.to_bits()
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Transposed view of a [`WeightMatrix`].
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    weights: Vec<f64>,
}

impl ColumnIndex {
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        self.rows[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&r, &w)| (r as usize, w))
    }

    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }
}
