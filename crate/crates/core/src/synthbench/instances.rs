use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::model::RowMatrix;
use crate::rasterize::WeightMatrix;
use crate::solver::ObservationSet;

/// Size limits for random row-stochastic instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceLimits {
    pub max_rows: usize,
    pub max_primitives: usize,
    pub max_dim: usize,
    /// Largest number of primitives on one ray.
    pub max_row_entries: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        InstanceLimits {
            max_rows: 500,
            max_primitives: 60,
            max_dim: 8,
            max_row_entries: 8,
        }
    }
}

/// A random lifting problem with rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: WeightMatrix,
    pub b: ObservationSet,
}

/// Draw instance `index` of the stream identified by `seed`.
///
/// Every primitive is seen by at least one ray, and every ray with two or
/// more primitives available mixes at least two of them.
pub fn random_instance(seed: u64, index: u64, limits: &InstanceLimits) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let p = rng.random_range(2..=limits.max_primitives.max(2));
    let r = rng.random_range(p.min(limits.max_rows)..=limits.max_rows.max(p));
    let f = rng.random_range(1..=limits.max_dim.max(1));
    let cap = limits.max_row_entries.clamp(2, p);
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(r);
    for i in 0..r {
        let k = rng.random_range(2..=cap);
        let mut idx = sample(&mut rng, p, k).into_vec();
        // first rays cover every primitive once
        if i < p && !idx.contains(&i) {
            idx[0] = i;
        }
        idx.sort_unstable();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = w.iter().sum();
        rows.push(idx.into_iter().zip(w).map(|(j, w)| (j as u32, w / s)).collect());
    }
    let a = WeightMatrix::from_rows_single_view(rows, p)?;
    let data: Vec<f64> = (0..r * f).map(|_| rng.sample(StandardNormal)).collect();
    let b = ObservationSet::dense(RowMatrix::from_vec(r, f, data)?, a.views().to_vec())?;
    Ok(Instance { a, b })
}
