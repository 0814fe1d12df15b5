use nalgebra::Vector2;
use rayon::prelude::*;

use super::project::{kernel_eval, project_primitive, ProjectedFootprint};
use super::{ViewRange, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::{CameraView, LiftConfig, SplatScene};

/// Weights below this are not stored.
pub(crate) const MIN_WEIGHT: f64 = 1e-8;

/// Per-view rasterization state: footprints and depth-sorted tile bins.
pub(crate) struct ViewRaster<'a> {
    view: &'a CameraView,
    footprints: Vec<Option<ProjectedFootprint>>,
    alphas: Vec<f64>,
    tiles: Vec<Vec<u32>>,
    tiles_x: u32,
    tile: u32,
    floor: f64,
}

pub(crate) fn prepare_view<'a>(scene: &SplatScene, view: &'a CameraView, cfg: &LiftConfig) -> ViewRaster<'a> {
    let footprints: Vec<Option<ProjectedFootprint>> = scene
        .primitives()
        .par_iter()
        .map(|p| project_primitive(p, view, cfg.kernel_cutoff_sigma))
        .collect();
    let alphas = scene.primitives().iter().map(|p| p.alpha(cfg.lambda)).collect();

    let tile = cfg.tile_size;
    let tiles_x = view.width.div_ceil(tile);
    let tiles_y = view.height.div_ceil(tile);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (j, fp) in footprints.iter().enumerate() {
        let Some(fp) = fp else { continue };
        let (mx, my, r) = (fp.mean2d.x, fp.mean2d.y, fp.radius);
        // sample points live at integer pixel coordinates
        let x_lo = (mx - r).ceil().max(0.0);
        let y_lo = (my - r).ceil().max(0.0);
        let x_hi = (mx + r).floor().min(view.width as f64 - 1.0);
        let y_hi = (my + r).floor().min(view.height as f64 - 1.0);
        if x_lo > x_hi || y_lo > y_hi {
            continue;
        }
        let (tx0, tx1) = (x_lo as u32 / tile, x_hi as u32 / tile);
        let (ty0, ty1) = (y_lo as u32 / tile, y_hi as u32 / tile);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                let rx0 = (tx * tile) as f64;
                let ry0 = (ty * tile) as f64;
                let rx1 = ((tx + 1) * tile).min(view.width) as f64 - 1.0;
                let ry1 = ((ty + 1) * tile).min(view.height) as f64 - 1.0;
                let dx = mx - mx.clamp(rx0, rx1);
                let dy = my - my.clamp(ry0, ry1);
                if dx * dx + dy * dy <= r * r {
                    tiles[(ty * tiles_x + tx) as usize].push(j as u32);
                }
            }
        }
    }
    tiles.par_iter_mut().for_each(|list| {
        list.sort_by(|&a, &b| {
            let da = footprints[a as usize].as_ref().map_or(0.0, |f| f.depth);
            let db = footprints[b as usize].as_ref().map_or(0.0, |f| f.depth);
            da.total_cmp(&db).then(a.cmp(&b))
        })
    });

    ViewRaster {
        view,
        footprints,
        alphas,
        tiles,
        tiles_x,
        tile,
        floor: cfg.transmittance_floor,
    }
}

impl ViewRaster<'_> {
    pub(crate) fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    /// Composite every pixel of one tile front to back.
    ///
    /// Returns `(pixel index within the view, row entries)` for each pixel of
    /// the tile in row-major order.
    pub(crate) fn composite_tile(&self, t: usize) -> Vec<(usize, Vec<(u32, f64)>)> {
        let view = self.view;
        let tx = t as u32 % self.tiles_x;
        let ty = t as u32 / self.tiles_x;
        let x0 = tx * self.tile;
        let y0 = ty * self.tile;
        let x1 = (x0 + self.tile).min(view.width);
        let y1 = (y0 + self.tile).min(view.height);
        let candidates = &self.tiles[t];
        let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
        for row in y0..y1 {
            for col in x0..x1 {
                let pixel = Vector2::new(col as f64, row as f64);
                let ray = view.pixel_ray(row, col);
                let mut entries = Vec::new();
                let mut transmittance = 1.0;
                for &j in candidates {
                    let fp = self.footprints[j as usize]
                        .as_ref()
                        .expect("binned primitives have footprints");
                    let delta = kernel_eval(fp, pixel, &ray);
                    if delta <= 0.0 {
                        continue;
                    }
                    let sigma = self.alphas[j as usize] * delta;
                    let w = sigma * transmittance;
                    if w >= MIN_WEIGHT {
                        entries.push((j, w.min(1.0)));
                    }
                    transmittance *= 1.0 - sigma;
                    if transmittance < self.floor {
                        break;
                    }
                }
                out.push(((row * view.width + col) as usize, entries));
            }
        }
        out
    }
}

pub(crate) fn validate_inputs(scene: &SplatScene, views: &[CameraView], cfg: &LiftConfig) -> Result<()> {
    if scene.is_empty() {
        return Err(Error::invalid("scene is empty"));
    }
    if views.is_empty() {
        return Err(Error::invalid("at least one camera view is required"));
    }
    cfg.validate()?;
    for v in views {
        v.validate()?;
    }
    let mut ids: Vec<&str> = views.iter().map(|v| v.view_id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("camera view ids must be unique"));
    }
    if scene.len() > u32::MAX as usize {
        return Err(Error::invalid("too many primitives"));
    }
    Ok(())
}

/// Build the ray-by-primitive weight matrix for all views.
///
/// Rows are ordered view by view, row-major within a view. Within a row,
/// entries appear front to back (depth, then primitive index).
pub fn build_weight_matrix(scene: &SplatScene, views: &[CameraView], cfg: &LiftConfig) -> Result<WeightMatrix> {
    validate_inputs(scene, views, cfg)?;
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut ranges = Vec::with_capacity(views.len());
    for view in views {
        let raster = prepare_view(scene, view, cfg);
        let start = rows.len();
        rows.resize(start + view.pixel_count(), Vec::new());
        let tiles: Vec<_> = (0..raster.tile_count())
            .into_par_iter()
            .map(|t| raster.composite_tile(t))
            .collect();
        for tile in tiles {
            for (pix, entries) in tile {
                rows[start + pix] = entries;
            }
        }
        ranges.push(ViewRange {
            view_id: view.view_id.clone(),
            start,
            width: view.width,
            height: view.height,
        });
    }
    WeightMatrix::from_rows(rows, scene.len(), ranges, cfg.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logit, KernelKind, SplatPrimitive};
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix4, Vector3};

    fn cam(w: u32, h: u32) -> CameraView {
        CameraView::new("v", w, h, 100.0, 100.0, (w / 2) as f64, (h / 2) as f64, Matrix4::identity()).unwrap()
    }

    fn prim(x: f64, y: f64, z: f64, scale: f64, alpha: f64) -> SplatPrimitive {
        let ls = scale.ln();
        SplatPrimitive::new(
            Vector3::new(x, y, z),
            Vector3::new(ls, ls, ls),
            [1.0, 0.0, 0.0, 0.0],
            logit(alpha),
            KernelKind::Gaussian3D,
        )
        .unwrap()
    }

    fn unit_lambda() -> LiftConfig {
        LiftConfig::with_lambda(1.0)
    }

    #[test]
    fn single_splat_center_weight_is_alpha() {
        let view = cam(32, 32);
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 1.0, 0.02, 0.9)]).unwrap();
        let a = build_weight_matrix(&scene, &[view], &unit_lambda()).unwrap();
        let center = 16 * 32 + 16;
        let row = a.row(center);
        assert_eq!(row.prims, &[0]);
        assert_abs_diff_eq!(row.weights[0], 0.9, epsilon = 1e-12);
    }

    #[test]
    fn two_splats_composite_front_to_back() {
        let view = cam(32, 32);
        // back splat listed first to check depth sorting
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 2.0, 0.04, 0.8), prim(0.0, 0.0, 1.0, 0.02, 0.6)]).unwrap();
        let a = build_weight_matrix(&scene, &[view], &unit_lambda()).unwrap();
        let row = a.row(16 * 32 + 16);
        assert_eq!(row.prims, &[1, 0]);
        assert_abs_diff_eq!(row.weights[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(row.weights[1], 0.32, epsilon = 1e-12);
        assert_abs_diff_eq!(row.sum(), 0.92, epsilon = 1e-12);
    }

    #[test]
    fn uncovered_pixel_has_empty_row() {
        let view = cam(64, 64);
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 1.0, 0.01, 0.9)]).unwrap();
        let a = build_weight_matrix(&scene, &[view], &unit_lambda()).unwrap();
        assert!(a.row(0).is_empty());
        assert_eq!(a.row_sum(0), 0.0);
        assert_eq!(a.rows(), 64 * 64);
    }

    #[test]
    fn rejects_empty_inputs() {
        let scene = SplatScene::new(vec![prim(0.0, 0.0, 1.0, 0.01, 0.9)]).unwrap();
        assert!(build_weight_matrix(&scene, &[], &unit_lambda()).is_err());
        assert!(build_weight_matrix(&scene, &[cam(8, 8)], &LiftConfig::with_lambda(0.0)).is_err());
    }

    #[test]
    fn transmittance_floor_stops_compositing() {
        let view = cam(16, 16);
        // ten fully opaque layers; only the first can contribute
        let prims: Vec<_> = (0..10).map(|k| prim(0.0, 0.0, 1.0 + k as f64 * 0.1, 0.05, 1.0 - 1e-9)).collect();
        let scene = SplatScene::new(prims).unwrap();
        let a = build_weight_matrix(&scene, &[view], &unit_lambda()).unwrap();
        let row = a.row(8 * 16 + 8);
        assert_eq!(row.len(), 1);
        assert_eq!(row.prims[0], 0);
    }

    #[test]
    fn tile_size_does_not_change_weights() {
        let view = cam(40, 30);
        let scene = SplatScene::new(vec![
            prim(0.05, 0.0, 1.0, 0.03, 0.7),
            prim(-0.05, 0.02, 1.2, 0.05, 0.5),
            prim(0.0, -0.03, 0.9, 0.02, 0.8),
        ])
        .unwrap();
        let base = build_weight_matrix(&scene, std::slice::from_ref(&view), &unit_lambda()).unwrap();
        for tile in [1, 3, 7, 16, 64] {
            let cfg = LiftConfig {
                tile_size: tile,
                ..unit_lambda()
            };
            let a = build_weight_matrix(&scene, std::slice::from_ref(&view), &cfg).unwrap();
            assert!(a.bit_identical(&base), "tile size {tile} changed the matrix");
        }
    }
}
