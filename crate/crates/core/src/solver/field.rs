use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};
use crate::model::{norm, RowMatrix};
use crate::rasterize::{validate_views, ViewRange, WeightMatrix};

/// Primitives whose accumulated weight is below this are treated as unobserved.
pub const COVERAGE_EPS: f64 = 1e-8;

/// Lifted per-primitive features.
///
/// Unobserved primitives carry a zero feature row and an explicit flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    values: RowMatrix,
    coverage: Vec<f64>,
    observed: Vec<bool>,
}

impl FeatureField {
    /// Build from raw values and per-primitive accumulated weight.
    pub fn new(mut values: RowMatrix, coverage: Vec<f64>) -> Result<Self> {
        check_dim("coverage length", values.rows(), coverage.len())?;
        let observed: Vec<bool> = coverage.iter().map(|&c| c >= COVERAGE_EPS).collect();
        for (j, &obs) in observed.iter().enumerate() {
            if !obs {
                values.row_mut(j).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature field contains non-finite values"));
        }
        Ok(FeatureField {
            values,
            coverage,
            observed,
        })
    }

    /// Field loaded without coverage information: zero rows count as unobserved.
    pub fn from_values(values: RowMatrix) -> Result<Self> {
        let coverage = values
            .iter_rows()
            .map(|r| if norm(r) > 0.0 { 1.0 } else { 0.0 })
            .collect::<Vec<_>>();
        let coverage = if values.cols() == 0 { vec![0.0; values.rows()] } else { coverage };
        FeatureField::new(values, coverage)
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        self.values.row(j)
    }

    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    pub fn is_observed(&self, j: usize) -> bool {
        self.observed[j]
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Same field with every feature multiplied by `c`.
    pub fn scaled(&self, c: f64) -> FeatureField {
        let mut out = self.clone();
        out.values.scale(c);
        out
    }
}

/// Per-view mapping from observation label to feature vector.
pub type LabelTable = BTreeMap<i32, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Dense(RowMatrix),
    Labeled { labels: Vec<i32>, tables: Vec<LabelTable> },
}

/// Per-ray observations `B`, aligned row for row with a [`WeightMatrix`].
///
/// Label-backed sets store one label per ray plus a per-view feature table;
/// label -1 marks a ray without observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    payload: Payload,
    dim: usize,
    views: Vec<ViewRange>,
}

impl ObservationSet {
    pub fn dense(values: RowMatrix, views: Vec<ViewRange>) -> Result<Self> {
        validate_views(&views, values.rows())?;
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations contain non-finite values"));
        }
        Ok(ObservationSet {
            dim: values.cols(),
            payload: Payload::Dense(values),
            views,
        })
    }

    pub fn labeled(labels: Vec<i32>, tables: Vec<LabelTable>, dim: usize, views: Vec<ViewRange>) -> Result<Self> {
        validate_views(&views, labels.len())?;
        check_dim("label tables per view", views.len(), tables.len())?;
        for (v, table) in views.iter().zip(&tables) {
            for (id, f) in table {
                if *id < 0 {
                    return Err(Error::invalid(format!("view {}: label table has negative id {id}", v.view_id)));
                }
                check_dim("label feature dimension", dim, f.len())?;
                if f.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("view {}: label {id} feature is not finite", v.view_id)));
                }
            }
            for &l in &labels[v.rows()] {
                if l < -1 {
                    return Err(Error::invalid(format!("view {}: label {l} below -1", v.view_id)));
                }
                if l >= 0 && !table.contains_key(&l) {
                    return Err(Error::invalid(format!(
                        "view {}: label {l} has no entry in the feature table",
                        v.view_id
                    )));
                }
            }
        }
        Ok(ObservationSet {
            payload: Payload::Labeled { labels, tables },
            dim,
            views,
        })
    }

    pub fn rows(&self) -> usize {
        match &self.payload {
            Payload::Dense(m) => m.rows(),
            Payload::Labeled { labels, .. } => labels.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn views(&self) -> &[ViewRange] {
        &self.views
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self.payload, Payload::Labeled { .. })
    }

    pub fn labels(&self) -> Option<&[i32]> {
        match &self.payload {
            Payload::Labeled { labels, .. } => Some(labels),
            Payload::Dense(_) => None,
        }
    }

    pub fn tables(&self) -> Option<&[LabelTable]> {
        match &self.payload {
            Payload::Labeled { tables, .. } => Some(tables),
            Payload::Dense(_) => None,
        }
    }

    pub fn dense_values(&self) -> Option<&RowMatrix> {
        match &self.payload {
            Payload::Dense(m) => Some(m),
            Payload::Labeled { .. } => None,
        }
    }

    /// Index of the view containing row `i`.
    pub fn view_of(&self, i: usize) -> usize {
        self.views.partition_point(|v| v.start + v.len() <= i)
    }

    /// Observation of ray `i`, or `None` when the ray is unlabeled.
    pub fn feature(&self, i: usize) -> Option<&[f64]> {
        match &self.payload {
            Payload::Dense(m) => Some(m.row(i)),
            Payload::Labeled { labels, tables } => {
                let l = labels[i];
                if l < 0 {
                    None
                } else {
                    tables[self.view_of(i)].get(&l).map(Vec::as_slice)
                }
            }
        }
    }

    pub fn observed_rows(&self) -> usize {
        match &self.payload {
            Payload::Dense(m) => m.rows(),
            Payload::Labeled { labels, .. } => labels.iter().filter(|&&l| l >= 0).count(),
        }
    }

    /// Replace the label map, keeping tables and layout.
    pub fn with_labels(&self, labels: Vec<i32>) -> Result<ObservationSet> {
        match &self.payload {
            Payload::Labeled { tables, .. } => {
                ObservationSet::labeled(labels, tables.clone(), self.dim, self.views.clone())
            }
            Payload::Dense(_) => Err(Error::invalid("observations are not label-backed")),
        }
    }

    /// Dense copy with unlabeled rows zero-filled.
    pub fn to_dense(&self) -> RowMatrix {
        let mut out = RowMatrix::zeros(self.rows(), self.dim);
        for i in 0..self.rows() {
            if let Some(f) = self.feature(i) {
                out.row_mut(i).copy_from_slice(f);
            }
        }
        out
    }

    /// Check row count and view layout against a weight matrix.
    pub fn check_aligned(&self, a: &WeightMatrix) -> Result<()> {
        check_dim("observation rows vs weight rows", a.rows(), self.rows())?;
        if a.views().len() != self.views.len() {
            return Err(Error::DimensionMismatch {
                what: "view count",
                expected: a.views().len(),
                got: self.views.len(),
            });
        }
        for (va, vb) in a.views().iter().zip(&self.views) {
            if va.view_id != vb.view_id || va.width != vb.width || va.height != vb.height {
                return Err(Error::invalid(format!(
                    "observation view {} ({}x{}) does not match weight view {} ({}x{})",
                    vb.view_id, vb.width, vb.height, va.view_id, va.width, va.height
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views(n: usize) -> Vec<ViewRange> {
        vec![ViewRange {
            view_id: "v".into(),
            start: 0,
            width: n as u32,
            height: 1,
        }]
    }

    #[test]
    fn unobserved_rows_are_zeroed() {
        let v = RowMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let f = FeatureField::new(v, vec![1.0, 1e-9]).unwrap();
        assert!(f.is_observed(0));
        assert!(!f.is_observed(1));
        assert_eq!(f.feature(1), &[0.0, 0.0]);
    }

    #[test]
    fn labeled_lookup() {
        let mut t = LabelTable::new();
        t.insert(4, vec![1.0, 0.0]);
        let obs = ObservationSet::labeled(vec![4, -1, 4], vec![t], 2, views(3)).unwrap();
        assert_eq!(obs.feature(0), Some(&[1.0, 0.0][..]));
        assert_eq!(obs.feature(1), None);
        assert_eq!(obs.observed_rows(), 2);
    }

    #[test]
    fn labeled_requires_table_entries() {
        let t = LabelTable::new();
        assert!(ObservationSet::labeled(vec![0], vec![t], 2, views(1)).is_err());
    }

    #[test]
    fn view_of_finds_ranges() {
        let vs = vec![
            ViewRange { view_id: "a".into(), start: 0, width: 2, height: 2 },
            ViewRange { view_id: "b".into(), start: 4, width: 3, height: 1 },
        ];
        let obs = ObservationSet::dense(RowMatrix::zeros(7, 1), vs).unwrap();
        assert_eq!(obs.view_of(0), 0);
        assert_eq!(obs.view_of(3), 0);
        assert_eq!(obs.view_of(4), 1);
        assert_eq!(obs.view_of(6), 1);
    }
}
