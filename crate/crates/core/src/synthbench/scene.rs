use nalgebra::{Matrix4, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::spec::{ObjectSpec, SceneSpec, Shape, ViewSpec};
use crate::error::Result;
use crate::model::{logit, CameraView, SplatPrimitive, SplatScene};

/// A generated scene with its cameras and per-primitive object ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: SplatScene,
    pub views: Vec<CameraView>,
    pub object_ids: Vec<usize>,
}

// Parameters are rounded to f32 so the scene survives a PLY round trip unchanged.
fn q(v: f64) -> f64 {
    v as f32 as f64
}

fn q3(v: Vector3<f64>) -> Vector3<f64> {
    v.map(q)
}

fn primitive(pos: Vector3<f64>, scale: Vector3<f64>, rot: UnitQuaternion<f64>, alpha: f64, o: &ObjectSpec) -> Result<SplatPrimitive> {
    let r = rot.quaternion();
    SplatPrimitive::new(
        q3(pos),
        q3(scale.map(f64::ln)),
        [q(r.w), q(r.i), q(r.j), q(r.k)],
        q(logit(alpha)),
        o.kernel,
    )
}

fn unit_normal(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]))
}

fn object_primitives(o: &ObjectSpec, rng: &mut ChaCha8Rng) -> Result<Vec<SplatPrimitive>> {
    let c = Vector3::from(o.center);
    let e = Vector3::from(o.extent);
    let alpha = |rng: &mut ChaCha8Rng| {
        let [lo, hi] = o.opacity;
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let mut out = Vec::with_capacity(o.count);
    match o.shape {
        Shape::Wall => {
            let nx = ((o.count as f64 * e.x / e.y).sqrt().round() as usize).max(1);
            let ny = (o.count as f64 / nx as f64).round().max(1.0) as usize;
            let (dx, dy) = (2.0 * e.x / nx as f64, 2.0 * e.y / ny as f64);
            let s = o.splat_scale.unwrap_or(dx.max(dy));
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = c + Vector3::new(-e.x + (ix as f64 + 0.5) * dx, -e.y + (iy as f64 + 0.5) * dy, 0.0);
                    let a = alpha(rng);
                    out.push(primitive(p, Vector3::new(s, s, e.z), UnitQuaternion::identity(), a, o)?);
                }
            }
        }
        Shape::Blob => {
            let s = o.splat_scale.unwrap_or(1.5 * (e.x * e.y * e.z).cbrt() / (o.count as f64).cbrt());
            while out.len() < o.count {
                let u = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if u.norm_squared() > 1.0 {
                    continue;
                }
                let p = c + u.component_mul(&e);
                let k = rng.random_range(0.8..1.2);
                let rot = random_rotation(rng);
                let a = alpha(rng);
                out.push(primitive(p, Vector3::repeat(s * k), rot, a, o)?);
            }
        }
        Shape::SphereCloud => {
            let area = (e.x * e.y + e.y * e.z + e.x * e.z) * 4.0 * std::f64::consts::PI / 3.0;
            let s = o.splat_scale.unwrap_or((area / o.count as f64).sqrt());
            for _ in 0..o.count {
                let u = unit_normal(rng);
                let p = c + u.component_mul(&e);
                let n = u.component_div(&e).normalize();
                let rot = UnitQuaternion::rotation_between(&Vector3::z(), &n)
                    .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
                let a = alpha(rng);
                out.push(primitive(p, Vector3::new(s, s, 0.1 * s), rot, a, o)?);
            }
        }
    }
    Ok(out)
}

/// Cameras on an azimuth arc around the target, all looking at it.
///
/// World axes follow the camera convention (y down), so positive elevation
/// places cameras above the target.
pub fn orbit_views(v: &ViewSpec) -> Result<Vec<CameraView>> {
    let target = Vector3::from(v.target);
    let e = v.elevation_degrees.to_radians();
    let fx = q(0.5 * v.width as f64 / (0.5 * v.fov_degrees.to_radians()).tan());
    (0..v.count)
        .map(|k| {
            let phi = if v.count == 1 {
                0.0
            } else {
                (-0.5 + k as f64 / (v.count - 1) as f64) * v.arc_degrees.to_radians()
            };
            let center = target + v.radius * Vector3::new(e.cos() * phi.sin(), -e.sin(), -e.cos() * phi.cos());
            let f = (target - center).normalize();
            let right = f.cross(&Vector3::new(0.0, -1.0, 0.0)).normalize();
            let down = f.cross(&right);
            let mut m = Matrix4::identity();
            for (r, axis) in [right, down, f].iter().enumerate() {
                for c in 0..3 {
                    m[(r, c)] = q(axis[c]);
                }
            }
            let rot = m.fixed_view::<3, 3>(0, 0).into_owned();
            let t = -(rot * center);
            for r in 0..3 {
                m[(r, 3)] = q(t[r]);
            }
            CameraView::new(
                format!("view_{k:03}"),
                v.width,
                v.height,
                fx,
                fx,
                0.5 * v.width as f64,
                0.5 * v.height as f64,
                m,
            )
        })
        .collect()
}

/// Build the scene, its cameras, and the ground-truth object id of each primitive.
///
/// Deterministic in `spec.seed`; each object draws from its own stream.
pub fn make_scene(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut prims = Vec::new();
    let mut ids = Vec::new();
    for (k, o) in spec.objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64 + 1);
        let p = object_primitives(o, &mut rng)?;
        ids.extend(std::iter::repeat_n(k, p.len()));
        prims.extend(p);
    }
    Ok(SynthScene {
        scene: SplatScene::new(prims)?,
        views: orbit_views(&spec.views)?,
        object_ids: ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LiftConfig;
    use crate::rasterize::build_weight_matrix;

    #[test]
    fn orbit_cameras_look_at_target() {
        let spec = SceneSpec::preset("two-blob").unwrap();
        for v in orbit_views(&spec.views).unwrap() {
            let p = v.to_camera(&Vector3::zeros());
            assert!(p.x.abs() < 1e-5 && p.y.abs() < 1e-5, "{p:?}");
            assert!((p.z - spec.views.radius).abs() < 1e-5);
            // camera sits above the target (negative y in a y-down world)
            assert!(v.center().y < 0.0);
        }
    }

    #[test]
    fn deterministic_and_partitioned() {
        let spec = SceneSpec::preset("two-blob").unwrap();
        let a = make_scene(&spec).unwrap();
        let b = make_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.object_ids.len(), a.scene.len());
        assert_eq!(a.object_ids.iter().filter(|&&k| k == 0).count(), 2000);
        assert_eq!(a.object_ids.iter().filter(|&&k| k == 1).count(), 2000);
    }

    #[test]
    fn opaque_wall_rows_are_nearly_full() {
        let spec = SceneSpec::preset("opaque-wall").unwrap();
        let s = make_scene(&spec).unwrap();
        assert!(s.scene.primitives().iter().all(|p| p.alpha(1.0) >= 0.999 - 1e-6));
        let a = build_weight_matrix(&s.scene, &s.views, &LiftConfig::with_lambda(1.0)).unwrap();
        let min = a.row_sums().into_iter().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.996, "min row sum {min}");
    }

    #[test]
    fn sphere_cloud_splats_are_tangent() {
        let mut spec = SceneSpec::preset("two-blob").unwrap();
        spec.objects[0].shape = Shape::SphereCloud;
        let s = make_scene(&spec).unwrap();
        let c = Vector3::from(spec.objects[0].center);
        for p in s.scene.primitives().iter().take(50) {
            let n = p.rotation_matrix().column(2).into_owned();
            let radial = (p.position - c).normalize();
            assert!(n.dot(&radial).abs() > 0.999);
        }
    }
}
