use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scene::SynthScene;
use super::spec::SceneSpec;
use crate::aggregate::Mask;
use crate::error::{Error, Result};
use crate::model::{norm, LiftConfig, RowMatrix};
use crate::query::{MaskIndex, QueryEmbedding};
use crate::rasterize::{build_weight_matrix, render_labels, WeightMatrix};
use crate::solver::{LabelTable, ObservationSet};

/// Rays whose object coverage falls below this are background in the silhouettes.
pub const SILHOUETTE_COVERAGE: f64 = 0.5;

/// Ground-truth provenance of one observation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTag {
    pub view_id: String,
    pub label: i32,
    pub merged: bool,
    /// Objects the mask covers.
    pub objects: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthObservations {
    pub obs: ObservationSet,
    pub tags: Vec<MaskTag>,
    /// Per-object silhouette masks keyed by (object name, view id).
    pub gt_masks: MaskIndex,
    pub queries: Vec<QueryEmbedding>,
    /// Views whose masks merge object pairs.
    pub noisy_views: Vec<String>,
}

impl SynthObservations {
    pub fn tags_csv(&self) -> String {
        let mut s = String::from("view_id,label,tag,objects\n");
        for t in &self.tags {
            let objs: Vec<String> = t.objects.iter().map(|o| o.to_string()).collect();
            let tag = if t.merged { "merged" } else { "clean" };
            s.push_str(&format!("{},{},{},{}\n", t.view_id, t.label, tag, objs.join(";")));
        }
        s
    }
}

/// Object silhouettes: per-ray object index, -1 where coverage is below [`SILHOUETTE_COVERAGE`].
pub fn silhouettes(synth: &SynthScene, n_objects: usize) -> Result<(WeightMatrix, Vec<i32>)> {
    let a = build_weight_matrix(&synth.scene, &synth.views, &LiftConfig::with_lambda(1.0))?;
    let mut gamma = RowMatrix::zeros(synth.object_ids.len(), n_objects + 1);
    for (j, &k) in synth.object_ids.iter().enumerate() {
        gamma.row_mut(j)[k + 1] = 1.0;
    }
    let mut ids = render_labels(&a, &gamma)?;
    for (i, id) in ids.iter_mut().enumerate() {
        if a.row_sum(i) < SILHOUETTE_COVERAGE {
            *id = -1;
        }
    }
    Ok((a, ids))
}

fn q(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x as f32 as f64).collect()
}

/// Unit-normalized mean of two unit vectors.
pub fn merged_feature(a: &[f64], b: &[f64]) -> Vec<f64> {
    let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let n = norm(&m);
    m.into_iter().map(|v| v / n).collect()
}

/// Label-backed observations from exact object silhouettes.
///
/// Clean views label object `k` as `k`. In noisy views each configured pair
/// is merged into one mask labeled `n_objects + pair index`, carrying the
/// normalized mean of the two object features.
pub fn make_observations(synth: &SynthScene, spec: &SceneSpec) -> Result<SynthObservations> {
    spec.validate()?;
    let n_obj = spec.objects.len();
    for &[a, b] in &spec.noise.merge_pairs {
        if a >= n_obj || b >= n_obj {
            return Err(Error::invalid(format!("merge pair [{a}, {b}] references a missing object")));
        }
    }
    let (a, ids) = silhouettes(synth, n_obj)?;
    let views = a.views().to_vec();
    // f32-rounded so label tables survive the file formats unchanged
    let features: Vec<Vec<f64>> = (0..n_obj).map(|k| q(spec.object_feature(k))).collect();

    let n_noisy = (spec.noise.merged_fraction * views.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..views.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0x6e6f697379);
    order.shuffle(&mut rng);
    let mut noisy = vec![false; views.len()];
    if !spec.noise.merge_pairs.is_empty() {
        for &v in &order[..n_noisy] {
            noisy[v] = true;
        }
    }

    let mut labels = vec![-1; ids.len()];
    let mut tables = Vec::with_capacity(views.len());
    let mut tags = Vec::new();
    let mut gt_masks = MaskIndex::new();
    for (vi, v) in views.iter().enumerate() {
        let rows = v.rows();
        let mut merged_into: BTreeMap<usize, usize> = BTreeMap::new();
        if noisy[vi] {
            for (p, &[x, y]) in spec.noise.merge_pairs.iter().enumerate() {
                merged_into.entry(x).or_insert(p);
                merged_into.entry(y).or_insert(p);
            }
        }
        let mut table = LabelTable::new();
        let mut present: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for i in rows.clone() {
            let id = ids[i];
            if id < 0 {
                continue;
            }
            let k = id as usize;
            let label = match merged_into.get(&k) {
                Some(&p) => (n_obj + p) as i32,
                None => k as i32,
            };
            labels[i] = label;
            let objs = present.entry(label).or_default();
            if !objs.contains(&k) {
                objs.push(k);
            }
        }
        for (&label, objs) in &mut present {
            objs.sort_unstable();
            let merged = label as usize >= n_obj;
            let f = if merged {
                let [x, y] = spec.noise.merge_pairs[label as usize - n_obj];
                q(merged_feature(&features[x], &features[y]))
            } else {
                features[label as usize].clone()
            };
            table.insert(label, f);
            tags.push(MaskTag {
                view_id: v.view_id.clone(),
                label,
                merged,
                objects: objs.clone(),
            });
        }
        tables.push(table);
        for (k, o) in spec.objects.iter().enumerate() {
            let m = Mask::from_labels(v.width, v.height, &ids[rows.clone()], k as i32)?;
            gt_masks.insert((o.name.clone(), v.view_id.clone()), m);
        }
    }
    let obs = ObservationSet::labeled(labels, tables, spec.feature_dim, views.clone())?;
    let queries = spec
        .objects
        .iter()
        .zip(&features)
        .map(|(o, f)| QueryEmbedding::new(o.name.clone(), f.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthObservations {
        obs,
        tags,
        gt_masks,
        queries,
        noisy_views: views
            .iter()
            .zip(&noisy)
            .filter(|(_, &n)| n)
            .map(|(v, _)| v.view_id.clone())
            .collect(),
    })
}
