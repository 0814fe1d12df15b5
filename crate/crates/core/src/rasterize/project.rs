use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};

use crate::model::{CameraView, KernelKind, Ray, SplatPrimitive};

/// Primitives whose center is closer than this (camera z, world units) are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Screen-space dilation added to projected 3D covariances (pixel²).
const LOW_PASS: f64 = 0.3;

/// Screen-space footprint of one primitive in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFootprint {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    /// Radius (pixels) of a disk containing the whole cutoff region.
    pub radius: f64,
    pub cutoff_sigma: f64,
    pub(crate) shape: FootprintShape,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum FootprintShape {
    Ellipse {
        conic: Matrix2<f64>,
    },
    Surfel {
        center: Vector3<f64>,
        normal: Vector3<f64>,
        /// Tangent axes pre-divided by their scales.
        axis_u: Vector3<f64>,
        axis_v: Vector3<f64>,
    },
}

impl ProjectedFootprint {
    pub fn kernel(&self) -> KernelKind {
        match self.shape {
            FootprintShape::Ellipse { .. } => KernelKind::Gaussian3D,
            FootprintShape::Surfel { .. } => KernelKind::Gaussian2D,
        }
    }
}

/// Project a primitive into a view. Returns `None` when culled.
pub fn project_primitive(
    splat: &SplatPrimitive,
    view: &CameraView,
    cutoff_sigma: f64,
) -> Option<ProjectedFootprint> {
    let w = view.rotation();
    let t = view.to_camera(&splat.position);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let mean2d = Vector2::new(view.fx * t.x / t.z + view.cx, view.fy * t.y / t.z + view.cy);

    // Perspective Jacobian, with the lateral position clamped as in common
    // splatting practice so far off-screen primitives stay well conditioned.
    let lim_x = 1.3 * 0.5 * view.width as f64 / view.fx;
    let lim_y = 1.3 * 0.5 * view.height as f64 / view.fy;
    let tx = (t.x / t.z).clamp(-lim_x, lim_x) * t.z;
    let ty = (t.y / t.z).clamp(-lim_y, lim_y) * t.z;
    let z2 = t.z * t.z;
    let jac = Matrix2x3::new(
        view.fx / t.z,
        0.0,
        -view.fx * tx / z2,
        0.0,
        view.fy / t.z,
        -view.fy * ty / z2,
    );

    match splat.kernel {
        KernelKind::Gaussian3D => {
            let jw = jac * w;
            let mut cov2d = jw * splat.covariance() * jw.transpose();
            cov2d[(0, 0)] += LOW_PASS;
            cov2d[(1, 1)] += LOW_PASS;
            cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
            cov2d[(1, 0)] = cov2d[(0, 1)];
            let det = cov2d.determinant();
            if !(det > 1e-12) || !det.is_finite() {
                return None;
            }
            let conic = cov2d.try_inverse()?;
            let radius = cutoff_sigma * max_eigenvalue(&cov2d).sqrt();
            Some(ProjectedFootprint {
                mean2d,
                cov2d,
                depth: t.z,
                radius,
                cutoff_sigma,
                shape: FootprintShape::Ellipse { conic },
            })
        }
        KernelKind::Gaussian2D => {
            let rot = splat.rotation_matrix();
            let scale = splat.scale();
            let tu: Vector3<f64> = rot.column(0).into_owned();
            let tv: Vector3<f64> = rot.column(1).into_owned();
            let normal: Vector3<f64> = rot.column(2).into_owned();

            // Affine covariance of the flat disk, kept for reporting.
            let flat = tu * tu.transpose() * scale.x * scale.x + tv * tv.transpose() * scale.y * scale.y;
            let jw = jac * w;
            let mut cov2d = jw * flat * jw.transpose();
            cov2d[(0, 0)] += LOW_PASS;
            cov2d[(1, 1)] += LOW_PASS;

            // Perspective maps the cutoff rectangle to a quadrilateral that
            // contains the projected cutoff ellipse; bound its corners.
            let mut radius: f64 = 0.0;
            let ku = tu * (cutoff_sigma * scale.x);
            let kv = tv * (cutoff_sigma * scale.y);
            for (su, sv) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let corner = view.to_camera(&(splat.position + ku * su + kv * sv));
                if !(corner.z > NEAR_PLANE) {
                    radius = f64::INFINITY;
                    break;
                }
                let px = Vector2::new(
                    view.fx * corner.x / corner.z + view.cx,
                    view.fy * corner.y / corner.z + view.cy,
                );
                radius = radius.max((px - mean2d).norm());
            }
            if radius.is_infinite() {
                let (wd, ht) = (view.width as f64, view.height as f64);
                radius = (wd * wd + ht * ht).sqrt() + (mean2d.norm());
            }
            Some(ProjectedFootprint {
                mean2d,
                cov2d,
                depth: t.z,
                radius: radius + 1.0,
                cutoff_sigma,
                shape: FootprintShape::Surfel {
                    center: splat.position,
                    normal,
                    axis_u: tu / scale.x,
                    axis_v: tv / scale.y,
                },
            })
        }
    }
}

fn max_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

/// Kernel value `delta` of a footprint at a pixel sample.
///
/// Returns 0 outside the cutoff region (beyond `cutoff_sigma` standard
/// deviations or outside the bounding disk).
pub fn kernel_eval(fp: &ProjectedFootprint, pixel: Vector2<f64>, ray: &Ray) -> f64 {
    let d = pixel - fp.mean2d;
    if d.norm_squared() > fp.radius * fp.radius {
        return 0.0;
    }
    let cut2 = fp.cutoff_sigma * fp.cutoff_sigma;
    let m2 = match &fp.shape {
        FootprintShape::Ellipse { conic } => (d.transpose() * conic * d)[0],
        FootprintShape::Surfel {
            center,
            normal,
            axis_u,
            axis_v,
        } => {
            let denom = normal.dot(&ray.direction);
            if denom.abs() < 1e-12 {
                return 0.0;
            }
            let t = normal.dot(&(center - ray.origin)) / denom;
            if !(t > 0.0) {
                return 0.0;
            }
            let hit = ray.origin + ray.direction * t - center;
            let u = axis_u.dot(&hit);
            let v = axis_v.dot(&hit);
            u * u + v * v
        }
    };
    if !(m2 <= cut2) {
        return 0.0;
    }
    (-0.5 * m2).exp().clamp(0.0, 1.0)
}
