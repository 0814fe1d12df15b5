use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nalgebra::Vector3;

use super::scene::{orbit_views, SynthScene};
use super::spec::ViewSpec;
use crate::error::Result;
use crate::model::{KernelKind, LiftConfig, RowMatrix, SplatPrimitive, SplatScene};
use crate::rasterize::{build_weight_matrix, render};
use crate::solver::{beta, lsq_oracle, ObservationSet};

pub const SWEEP_LAMBDAS: [f64; 5] = [1.0, 1.2, 1.5, 2.0, 4.0];

/// Feature dimension of the sweep observations.
pub const SWEEP_DIM: usize = 8;

/// Views of the sweep scene: two nearly coincident cameras, so footprints
/// keep their designed spacing in both.
pub fn lambda_sweep_views() -> ViewSpec {
    ViewSpec {
        count: 2,
        width: 256,
        height: 160,
        radius: 3.5,
        arc_degrees: 2.0,
        elevation_degrees: 0.0,
        fov_degrees: 50.0,
        target: [0.0; 3],
    }
}

const GRID: (usize, usize) = (6, 4);
const SPACING: f64 = 0.6;
const OPAQUE_SIGMA: f64 = 0.22 * SPACING;
const FAINT_SIGMA: f64 = 0.115 * SPACING;

/// Checkerboard of opaque-leaning (logit in [1, 1.5]) and faint (logit in
/// [-1.5, -1]) splats, opaque ones slightly in front.
///
/// Opaque footprints end before reaching a faint center or a diagonal
/// opaque neighbor, so each primitive owns rays outright. Faint footprints
/// only reach into the outer rim of their opaque neighbors, where the opaque
/// splat still dominates. Every mixing ray therefore has the faint splat as
/// its minority entry, and sharpening the sigmoid shrinks that share.
/// Object id 0 marks opaque splats, 1 faint ones.
pub fn lambda_sweep_primitives(seed: u64) -> Result<(Vec<SplatPrimitive>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6772696400);
    let (nx, ny) = GRID;
    let q = |v: f64| v as f32 as f64;
    let mut prims = Vec::with_capacity(nx * ny);
    let mut ids = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let opaque = (ix + iy) % 2 == 0;
            let (theta, sigma, z): (f64, f64, f64) = if opaque {
                (rng.random_range(1.0..1.5), OPAQUE_SIGMA, -0.005)
            } else {
                (rng.random_range(-1.5..-1.0), FAINT_SIGMA, 0.005)
            };
            let pos = Vector3::new(
                (ix as f64 - 0.5 * (nx - 1) as f64) * SPACING,
                (iy as f64 - 0.5 * (ny - 1) as f64) * SPACING,
                z,
            );
            prims.push(SplatPrimitive::new(
                pos.map(q),
                Vector3::new(sigma, sigma, 0.001).map(|v| q(v.ln())),
                [1.0, 0.0, 0.0, 0.0],
                q(theta),
                KernelKind::Gaussian3D,
            )?);
            ids.push(usize::from(!opaque));
        }
    }
    Ok((prims, ids))
}

/// Sweep scene plus fixed noisy observations rendered at λ = 1 with unit noise.
pub fn lambda_sweep_scene(seed: u64) -> Result<(SynthScene, ObservationSet)> {
    let (prims, object_ids) = lambda_sweep_primitives(seed)?;
    let synth = SynthScene {
        scene: SplatScene::new(prims)?,
        views: orbit_views(&lambda_sweep_views())?,
        object_ids,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7377656570);
    let p = synth.scene.len();
    // feature differences stay small next to the per-ray noise
    let x0: Vec<f64> = (0..p * SWEEP_DIM).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    let x0 = RowMatrix::from_vec(p, SWEEP_DIM, x0)?;
    let a = build_weight_matrix(&synth.scene, &synth.views, &LiftConfig::with_lambda(1.0))?.row_normalized();
    let mut b = render(&a, &x0, &[0.0; SWEEP_DIM])?;
    for v in b.as_mut_slice() {
        *v += rng.sample::<f64, _>(StandardNormal);
    }
    let obs = ObservationSet::dense(b, a.views().to_vec())?;
    Ok((synth, obs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    /// Maximum per-ray dispersion at the least-squares optimum.
    pub beta: f64,
    /// Mean per-ray dispersion over observed rays with geometry.
    pub beta_mean: f64,
}

/// Dispersion at the least-squares optimum for each polarization factor.
pub fn lambda_sweep(seed: u64, lambdas: &[f64]) -> Result<Vec<SweepPoint>> {
    let (synth, obs) = lambda_sweep_scene(seed)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let a = build_weight_matrix(&synth.scene, &synth.views, &LiftConfig::with_lambda(lambda))?.row_normalized();
            let x = lsq_oracle(&a, &obs)?;
            let br = beta(&a, &obs, &x)?;
            let rows: Vec<f64> = (0..a.rows()).filter(|&i| !a.row(i).is_empty()).map(|i| br.per_row[i]).collect();
            Ok(SweepPoint {
                lambda,
                beta: br.max,
                beta_mean: rows.iter().sum::<f64>() / rows.len().max(1) as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_checkerboard_has_the_designed_logits() {
        let (s, obs) = lambda_sweep_scene(1).unwrap();
        for (p, &k) in s.scene.primitives().iter().zip(&s.object_ids) {
            if k == 0 {
                assert!(p.theta >= 1.0);
            } else {
                assert!(p.theta <= -1.0);
            }
        }
        assert_eq!(obs.dim(), SWEEP_DIM);
    }

    #[test]
    fn every_mixing_ray_has_a_faint_minority() {
        let (s, _) = lambda_sweep_scene(2).unwrap();
        let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::with_lambda(1.0)).unwrap().row_normalized();
        let mut mixing = 0;
        for i in 0..a.rows() {
            let row: Vec<(usize, f64)> = a.row(i).iter().collect();
            if row.len() < 2 {
                continue;
            }
            mixing += 1;
            let (jmax, _) = row.iter().copied().fold((0, 0.0), |b, e| if e.1 > b.1 { e } else { b });
            assert_eq!(s.object_ids[jmax], 0, "row {i}: {row:?}");
        }
        assert!(mixing > 0);
    }

    #[test]
    fn beta_falls_with_lambda() {
        let pts = lambda_sweep(0, &SWEEP_LAMBDAS).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].beta <= w[0].beta, "{pts:?}");
        }
        assert!(pts[0].beta > 0.0);
    }
}
