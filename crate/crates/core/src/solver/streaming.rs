use rayon::prelude::*;

use super::field::{FeatureField, ObservationSet, COVERAGE_EPS};
use super::lift::LiftMode;
use crate::error::{Error, Result};
use crate::model::{CameraView, LiftConfig, RowMatrix, SplatScene};
use crate::rasterize::prepare_view;
use crate::rasterize::weights::validate_inputs;

/// Tile-local sums, sorted by primitive index.
struct Partial {
    prims: Vec<u32>,
    den: Vec<f64>,
    num: Vec<f64>,
}

/// Lift observations during rasterization, without building the weight matrix.
///
/// Each tile accumulates its own numerators and denominators; tiles are then
/// merged in a fixed order, so the result does not depend on thread count.
pub fn lift_streaming(
    scene: &SplatScene,
    views: &[CameraView],
    obs: &ObservationSet,
    cfg: &LiftConfig,
    mode: LiftMode,
) -> Result<FeatureField> {
    validate_inputs(scene, views, cfg)?;
    if obs.views().len() != views.len() {
        return Err(Error::DimensionMismatch {
            what: "observation views vs camera views",
            expected: views.len(),
            got: obs.views().len(),
        });
    }
    for (v, r) in views.iter().zip(obs.views()) {
        if v.view_id != r.view_id || v.width != r.width || v.height != r.height {
            return Err(Error::invalid(format!(
                "observation view {} ({}x{}) does not match camera {} ({}x{})",
                r.view_id, r.width, r.height, v.view_id, v.width, v.height
            )));
        }
    }
    let f = obs.dim();
    let p = scene.len();
    let mut num = RowMatrix::zeros(p, f);
    let mut den = vec![0.0; p];

    for (view, range) in views.iter().zip(obs.views()) {
        let raster = prepare_view(scene, view, cfg);
        let partials: Vec<Partial> = (0..raster.tile_count())
            .into_par_iter()
            .map(|t| {
                let mut local: Vec<(u32, f64, Vec<f64>)> = Vec::new();
                let mut slot: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
                for (pix, entries) in raster.composite_tile(t) {
                    let Some(b) = obs.feature(range.start + pix) else { continue };
                    for (j, w) in entries {
                        let ww = mode.weight(w);
                        let k = *slot.entry(j).or_insert_with(|| {
                            local.push((j, 0.0, vec![0.0; f]));
                            local.len() - 1
                        });
                        let e = &mut local[k];
                        e.1 += ww;
                        for (n, o) in e.2.iter_mut().zip(b) {
                            *n += ww * o;
                        }
                    }
                }
                local.sort_unstable_by_key(|e| e.0);
                let mut out = Partial {
                    prims: Vec::with_capacity(local.len()),
                    den: Vec::with_capacity(local.len()),
                    num: Vec::with_capacity(local.len() * f),
                };
                for (j, d, n) in local {
                    out.prims.push(j);
                    out.den.push(d);
                    out.num.extend(n);
                }
                out
            })
            .collect();
        for part in partials {
            for (k, &j) in part.prims.iter().enumerate() {
                let j = j as usize;
                den[j] += part.den[k];
                for (n, v) in num.row_mut(j).iter_mut().zip(&part.num[k * f..(k + 1) * f]) {
                    *n += v;
                }
            }
        }
    }
    if den.iter().all(|&d| d == 0.0) {
        return Err(Error::NoObservations);
    }
    for (j, &d) in den.iter().enumerate() {
        if d >= COVERAGE_EPS {
            num.row_mut(j).iter_mut().for_each(|n| *n /= d);
        }
    }
    FeatureField::new(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logit, KernelKind, SplatPrimitive};
    use crate::rasterize::build_weight_matrix;
    use crate::solver::lift;
    use nalgebra::{Matrix4, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(id: &str, w: u32, h: u32) -> CameraView {
        CameraView::new(id, w, h, 60.0, 60.0, (w / 2) as f64, (h / 2) as f64, Matrix4::identity()).unwrap()
    }

    fn prim(x: f64, y: f64, z: f64, s: f64, a: f64) -> SplatPrimitive {
        SplatPrimitive::new(
            Vector3::new(x, y, z),
            Vector3::from_element(s.ln()),
            [1.0, 0.0, 0.0, 0.0],
            logit(a),
            KernelKind::Gaussian3D,
        )
        .unwrap()
    }

    fn observations(views: &[CameraView], f: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ranges = Vec::new();
        let mut start = 0;
        for v in views {
            ranges.push(crate::rasterize::ViewRange {
                view_id: v.view_id.clone(),
                start,
                width: v.width,
                height: v.height,
            });
            start += v.pixel_count();
        }
        let data = (0..start * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        ObservationSet::dense(RowMatrix::from_vec(start, f, data).unwrap(), ranges).unwrap()
    }

    #[test]
    fn single_splat_matches_exactly() {
        let views = vec![cam("a", 12, 10)];
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 2.0, 0.05, 0.8)]).unwrap();
        let cfg = LiftConfig::default();
        let b = observations(&views, 3, 1);
        let a = build_weight_matrix(&scene, &views, &cfg).unwrap();
        for mode in [LiftMode::RowSum, LiftMode::RowSumSquared] {
            let m = lift(&a, &b, mode).unwrap();
            let s = lift_streaming(&scene, &views, &b, &cfg, mode).unwrap();
            assert_eq!(m, s);
        }
    }

    #[test]
    fn matches_matrix_path_on_random_scene() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prims = (0..150)
            .map(|_| {
                prim(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(1.5..3.0),
                    rng.random_range(0.02..0.12),
                    rng.random_range(0.1..0.99),
                )
            })
            .collect();
        let scene = SplatScene::new(prims).unwrap();
        let views = vec![cam("a", 64, 48), cam("b", 50, 40)];
        let cfg = LiftConfig::default();
        let b = observations(&views, 4, 2);
        let a = build_weight_matrix(&scene, &views, &cfg).unwrap();
        let m = lift(&a, &b, LiftMode::RowSum).unwrap();
        let s = lift_streaming(&scene, &views, &b, &cfg, LiftMode::RowSum).unwrap();
        assert_eq!(m.observed(), s.observed());
        for j in 0..m.len() {
            for (x, y) in m.feature(j).iter().zip(s.feature(j)) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{j}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn all_unobserved_is_an_error() {
        let views = vec![cam("a", 8, 8)];
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 2.0, 0.05, 0.8)]).unwrap();
        let mut ranges = observations(&views, 1, 0).views().to_vec();
        ranges[0].start = 0;
        let b = ObservationSet::labeled(vec![-1; 64], vec![Default::default()], 1, ranges).unwrap();
        assert!(matches!(
            lift_streaming(&scene, &views, &b, &LiftConfig::default(), LiftMode::RowSum),
            Err(Error::NoObservations)
        ));
    }
}
