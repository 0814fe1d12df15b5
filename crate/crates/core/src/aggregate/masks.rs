use std::collections::BTreeMap;

use crate::error::{check_dim, Error, Result};
use crate::rasterize::ViewRange;
use crate::solver::ObservationSet;

/// Binary image mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        check_dim("mask pixels", width as usize * height as usize, bits.len())?;
        Ok(Mask { width, height, bits })
    }

    pub fn from_labels(width: u32, height: u32, labels: &[i32], label: i32) -> Result<Self> {
        Mask::new(width, height, labels.iter().map(|&l| l == label).collect())
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `|m ∧ m'| / |m ∨ m'|`, 0 when both are empty.
pub fn iou(m: &Mask, other: &Mask) -> Result<f64> {
    if m.width != other.width || m.height != other.height {
        return Err(Error::invalid(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            m.width, m.height, other.width, other.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in m.bits.iter().zip(&other.bits) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Observation label maps paired with projected cluster label maps, per view.
#[derive(Debug, Clone)]
pub struct MaskSet {
    views: Vec<ViewRange>,
    labels: Vec<i32>,
    projected: Vec<i32>,
}

impl MaskSet {
    /// `kappa` is the per-ray cluster projection aligned with `b`.
    pub fn new(b: &ObservationSet, kappa: &[i32]) -> Result<Self> {
        let labels = b
            .labels()
            .ok_or_else(|| Error::invalid("mask filtering requires label-backed observations"))?;
        check_dim("projected labels vs observation rows", b.rows(), kappa.len())?;
        Ok(MaskSet {
            views: b.views().to_vec(),
            labels: labels.to_vec(),
            projected: kappa.to_vec(),
        })
    }

    pub fn views(&self) -> &[ViewRange] {
        &self.views
    }

    pub fn label_map(&self, view: usize) -> &[i32] {
        &self.labels[self.views[view].rows()]
    }

    pub fn projected_map(&self, view: usize) -> &[i32] {
        &self.projected[self.views[view].rows()]
    }

    /// Non-negative observation labels present in a view, ascending.
    pub fn observation_labels(&self, view: usize) -> Vec<i32> {
        let mut ls: Vec<i32> = self.label_map(view).iter().copied().filter(|&l| l >= 0).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }

    pub fn observation_mask(&self, view: usize, label: i32) -> Mask {
        let v = &self.views[view];
        Mask::from_labels(v.width, v.height, self.label_map(view), label).expect("view-sized map")
    }

    pub fn projected_mask(&self, view: usize, label: i32) -> Mask {
        let v = &self.views[view];
        Mask::from_labels(v.width, v.height, self.projected_map(view), label).expect("view-sized map")
    }

    /// For each observation label in a view: the cluster label with maximal IoU
    /// (ties to the lower label, -1 excluded) and that IoU.
    ///
    /// Labels whose mask touches no cluster get `(-1, 0.0)`.
    pub fn best_matches(&self, view: usize) -> BTreeMap<i32, (i32, f64)> {
        let obs = self.label_map(view);
        let proj = self.projected_map(view);
        let mut obs_count: BTreeMap<i32, usize> = BTreeMap::new();
        let mut proj_count: BTreeMap<i32, usize> = BTreeMap::new();
        let mut inter: BTreeMap<(i32, i32), usize> = BTreeMap::new();
        for (&o, &k) in obs.iter().zip(proj) {
            if o >= 0 {
                *obs_count.entry(o).or_default() += 1;
            }
            if k >= 0 {
                *proj_count.entry(k).or_default() += 1;
            }
            if o >= 0 && k >= 0 {
                *inter.entry((o, k)).or_default() += 1;
            }
        }
        obs_count
            .iter()
            .map(|(&o, &n_o)| {
                let mut best = (-1, 0.0);
                for (&(_, k), &n) in inter.range((o, i32::MIN)..=(o, i32::MAX)) {
                    let union = n_o + proj_count[&k] - n;
                    let v = n as f64 / union as f64;
                    if v > best.1 {
                        best = (k, v);
                    }
                }
                (o, best)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: u32, h: u32, x0: u32, x1: u32, y0: u32, y1: u32) -> Mask {
        let bits = (0..h)
            .flat_map(|y| (0..w).map(move |x| x >= x0 && x < x1 && y >= y0 && y < y1))
            .collect();
        Mask::new(w, h, bits).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = square(20, 20, 0, 10, 0, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &square(20, 20, 10, 20, 10, 20)).unwrap(), 0.0);
        assert_eq!(iou(&a, &square(20, 20, 0, 10, 0, 5)).unwrap(), 0.5);
        let empty = square(20, 20, 0, 0, 0, 0);
        assert_eq!(iou(&empty, &empty).unwrap(), 0.0);
        assert!(iou(&a, &square(10, 10, 0, 1, 0, 1)).is_err());
    }

    #[test]
    fn best_match_agrees_with_direct_iou() {
        let views = vec![ViewRange { view_id: "v".into(), start: 0, width: 4, height: 2 }];
        let labels = vec![0, 0, 0, 1, 1, -1, 0, 1];
        let kappa = vec![2, 2, 3, 3, 3, 3, -1, 2];
        let mut t = crate::solver::LabelTable::new();
        t.insert(0, vec![1.0]);
        t.insert(1, vec![2.0]);
        let b = ObservationSet::labeled(labels, vec![t], 1, views).unwrap();
        let ms = MaskSet::new(&b, &kappa).unwrap();
        let best = ms.best_matches(0);
        for (&o, &(k, v)) in &best {
            let direct = iou(&ms.observation_mask(0, o), &ms.projected_mask(0, k)).unwrap();
            assert_eq!(v, direct);
            for other in [2, 3] {
                assert!(iou(&ms.observation_mask(0, o), &ms.projected_mask(0, other)).unwrap() <= v);
            }
        }
        assert_eq!(best[&0].0, 2);
    }
}
