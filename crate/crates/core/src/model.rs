//! Scene, camera, and configuration types shared by every stage.
//!
//! Primitives keep the usual splat-file parameterization: scales are stored
//! as logs and opacity as a raw logit. Activation happens when values are
//! read, so a scene loaded from disk can be written back unchanged.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel used to evaluate a primitive's footprint along a ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Volumetric Gaussian, evaluated through its projected 2D covariance.
    #[default]
    Gaussian3D,
    /// Planar surfel, evaluated at the exact ray-plane intersection.
    Gaussian2D,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian3d" | "3dgs" | "3d" => Ok(KernelKind::Gaussian3D),
            "gaussian2d" | "2dgs" | "2d" => Ok(KernelKind::Gaussian2D),
            other => Err(Error::invalid(format!("unknown kernel kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::Gaussian3D => f.write_str("gaussian3d"),
            KernelKind::Gaussian2D => f.write_str("gaussian2d"),
        }
    }
}

/// Logistic sigmoid, `1 / (1 + e^{-theta})`.
///
/// Evaluated in two branches so that neither side overflows for large `|theta|`.
pub fn opacity(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("opacity logit must be finite, got {theta}")));
    }
    Ok(sigmoid(theta))
}

/// Sharpened sigmoid `1 / (1 + e^{-lambda * theta})`.
///
/// `lambda > 1` pushes opacities toward 0 or 1 without touching the stored
/// logits; `lambda == 1` is exactly [`opacity`].
pub fn opacity_polarized(theta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("polarization factor must be positive, got {lambda}")));
    }
    opacity(theta)?;
    Ok(sigmoid(lambda * theta))
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Inverse of the sigmoid, used when synthesizing primitives from target opacities.
pub fn logit(alpha: f64) -> f64 {
    (alpha / (1.0 - alpha)).ln()
}

/// One splat primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatPrimitive {
    pub position: Vector3<f64>,
    /// Per-axis log scale. Gaussian2D uses only the first two axes.
    pub log_scale: Vector3<f64>,
    /// Rotation as stored (w, x, y, z); normalized on use.
    pub rotation: [f64; 4],
    /// Raw opacity logit.
    pub theta: f64,
    pub kernel: KernelKind,
    /// Degree-0 color coefficients, carried through for file round trips.
    pub color_dc: [f64; 3],
}

impl SplatPrimitive {
    pub fn new(
        position: Vector3<f64>,
        log_scale: Vector3<f64>,
        rotation: [f64; 4],
        theta: f64,
        kernel: KernelKind,
    ) -> Result<Self> {
        let prim = SplatPrimitive {
            position,
            log_scale,
            rotation,
            theta,
            kernel,
            color_dc: [0.0; 3],
        };
        prim.validate()?;
        Ok(prim)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.theta.is_finite();
        if !finite {
            return Err(Error::invalid("primitive has non-finite parameters"));
        }
        let norm2: f64 = self.rotation.iter().map(|v| v * v).sum();
        if norm2 < 1e-24 {
            return Err(Error::invalid("primitive rotation quaternion has zero norm"));
        }
        if self.scale().iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("primitive scale underflows or overflows"));
        }
        Ok(())
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn unit_rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.unit_rotation().to_rotation_matrix().into_inner()
    }

    /// World-space covariance `R S Sᵀ Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let rs = self.rotation_matrix() * Matrix3::from_diagonal(&self.scale());
        rs * rs.transpose()
    }

    pub fn alpha(&self, lambda: f64) -> f64 {
        sigmoid(lambda * self.theta)
    }
}

/// Ordered, non-empty set of primitives. Indices are stable.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatScene {
    primitives: Vec<SplatPrimitive>,
}

impl SplatScene {
    pub fn new(primitives: Vec<SplatPrimitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::invalid("scene must contain at least one primitive"));
        }
        for (i, p) in primitives.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::invalid(format!("primitive {i}: {e}")))?;
        }
        Ok(SplatScene { primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitives(&self) -> &[SplatPrimitive] {
        &self.primitives
    }
}

/// A world-space ray, `origin + t * direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

/// Pinhole camera with OpenCV axes (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: Matrix4<f64>,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        view_id: impl Into<String>,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        world_to_camera: Matrix4<f64>,
    ) -> Result<Self> {
        let view = CameraView {
            view_id: view_id.into(),
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            world_to_camera,
        };
        view.validate()?;
        Ok(view)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.view_id;
        if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '/' || c == '\\') {
            return Err(Error::invalid(format!("view id '{id}' must be a non-empty token")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("view {id}: resolution must be positive")));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::invalid(format!("view {id}: focal lengths must be positive")));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::invalid(format!("view {id}: principal point outside the image")));
        }
        let m = &self.world_to_camera;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("view {id}: pose has non-finite entries")));
        }
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid(format!("view {id}: pose bottom row must be 0 0 0 1")));
        }
        let r = self.rotation();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-6 || r.determinant() < 0.0 {
            return Err(Error::invalid(format!(
                "view {id}: rotation block is not orthonormal (deviation {err:.3e})"
            )));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.world_to_camera.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.world_to_camera.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// World-space ray through the sample point of pixel `(row, col)`.
    ///
    /// Pixels are sampled at integer coordinates, so the principal point maps
    /// to pixel `(cy, cx)` exactly.
    pub fn pixel_ray(&self, row: u32, col: u32) -> Ray {
        let dir_cam = Vector3::new(
            (col as f64 - self.cx) / self.fx,
            (row as f64 - self.cy) / self.fy,
            1.0,
        );
        Ray {
            origin: self.center(),
            direction: self.rotation().transpose() * dir_cam,
        }
    }
}

/// Parameters for weight construction and lifting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    /// Opacity polarization factor.
    pub lambda: f64,
    /// Compositing stops once transmittance falls below this.
    pub transmittance_floor: f64,
    /// Footprint cutoff, in standard deviations.
    pub kernel_cutoff_sigma: f64,
    pub tile_size: u32,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            lambda: 1.2,
            transmittance_floor: 1e-4,
            kernel_cutoff_sigma: 3.0,
            tile_size: 16,
        }
    }
}

impl LiftConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        LiftConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.1) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0.1, got {}", self.lambda)));
        }
        if !(1e-6..=0.1).contains(&self.transmittance_floor) {
            return Err(Error::invalid(format!(
                "transmittance_floor must lie in [1e-6, 0.1], got {}",
                self.transmittance_floor
            )));
        }
        if !(self.kernel_cutoff_sigma > 0.0) || !self.kernel_cutoff_sigma.is_finite() {
            return Err(Error::invalid("kernel_cutoff_sigma must be positive"));
        }
        if self.tile_size == 0 {
            return Err(Error::invalid("tile_size must be positive"));
        }
        Ok(())
    }
}

/// Dense row-major matrix used for per-ray and per-primitive feature blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl RowMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMatrix {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "row matrix payload",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(RowMatrix { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(RowMatrix {
            data,
            rows: rows.len(),
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
