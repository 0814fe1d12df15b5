use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{norm, KernelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Regular grid of flat splats in a plane facing the cameras.
    Wall,
    /// Splats scattered uniformly inside an ellipsoid.
    Blob,
    /// Flat splats tangent to an ellipsoid surface.
    SphereCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: Shape,
    /// Number of primitives (a wall rounds this to a full grid).
    pub count: usize,
    /// Opacity range, drawn uniformly.
    pub opacity: [f64; 2],
    pub center: [f64; 3],
    /// Half-size along each axis.
    pub extent: [f64; 3],
    /// Splat standard deviation in world units; derived from density when absent.
    #[serde(default)]
    pub splat_scale: Option<f64>,
    /// Feature vector; the k-th basis vector when absent.
    #[serde(default)]
    pub feature: Option<Vec<f64>>,
    #[serde(default)]
    pub kernel: KernelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewSpec {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    /// Distance from the orbit target.
    pub radius: f64,
    /// Total azimuth span of the orbit, in degrees.
    pub arc_degrees: f64,
    pub elevation_degrees: f64,
    /// Horizontal field of view, in degrees.
    pub fov_degrees: f64,
    pub target: [f64; 3],
}

impl Default for ViewSpec {
    fn default() -> Self {
        ViewSpec {
            count: 8,
            width: 96,
            height: 72,
            radius: 4.0,
            arc_degrees: 60.0,
            elevation_degrees: 10.0,
            fov_degrees: 40.0,
            target: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Fraction of views whose masks merge object pairs.
    pub merged_fraction: f64,
    /// Object index pairs merged into one mask in noisy views.
    pub merge_pairs: Vec<[usize; 2]>,
}

/// Declarative description of a synthetic benchmark scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub views: ViewSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Reject specs whose object features are too similar to cluster apart.
    #[serde(default = "default_true")]
    pub require_separable: bool,
}

fn default_dim() -> usize {
    8
}

fn default_true() -> bool {
    true
}

/// Largest cosine allowed between object features of a separable spec.
pub const SEPARABLE_COSINE: f64 = 0.9;

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::invalid(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SceneSpec::from_toml(&text).map_err(|e| match e {
            Error::InvalidInput(m) => Error::format(path, "spec", m),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    /// Feature vector of object `k`, unit-normalized.
    pub fn object_feature(&self, k: usize) -> Vec<f64> {
        let f = match &self.objects[k].feature {
            Some(f) => f.clone(),
            None => {
                let mut e = vec![0.0; self.feature_dim];
                e[k % self.feature_dim] = 1.0;
                e
            }
        };
        let n = norm(&f);
        f.into_iter().map(|v| v / n).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::invalid("scene spec has no objects"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        for o in &self.objects {
            let what = |m: &str| Error::invalid(format!("object '{}': {m}", o.name));
            if o.count == 0 {
                return Err(what("zero primitives"));
            }
            let [lo, hi] = o.opacity;
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(what("opacity range must satisfy 0 < lo <= hi < 1"));
            }
            if o.extent.iter().any(|e| !(*e > 0.0)) {
                return Err(what("extent must be positive"));
            }
            if o.splat_scale.is_some_and(|s| !(s > 0.0)) {
                return Err(what("splat_scale must be positive"));
            }
            if let Some(f) = &o.feature {
                if f.len() != self.feature_dim || norm(f) == 0.0 || f.iter().any(|v| !v.is_finite()) {
                    return Err(what("feature must be a non-zero finite vector of length feature_dim"));
                }
            }
        }
        if self.objects.iter().all(|o| o.feature.is_none()) && self.objects.len() > self.feature_dim {
            return Err(Error::invalid("more objects than feature dimensions; give explicit features"));
        }
        if self.require_separable {
            for a in 0..self.objects.len() {
                for b in a + 1..self.objects.len() {
                    let c: f64 = crate::model::dot(&self.object_feature(a), &self.object_feature(b));
                    if c >= SEPARABLE_COSINE {
                        return Err(Error::invalid(format!(
                            "objects '{}' and '{}' have feature cosine {c:.3} >= {SEPARABLE_COSINE}",
                            self.objects[a].name, self.objects[b].name
                        )));
                    }
                }
            }
        }
        let v = &self.views;
        if v.count == 0 || v.width == 0 || v.height == 0 {
            return Err(Error::invalid("views need a positive count and resolution"));
        }
        if !(v.radius > 0.0) || !(v.fov_degrees > 0.0 && v.fov_degrees < 170.0) {
            return Err(Error::invalid("views need a positive radius and a field of view in (0, 170) degrees"));
        }
        if !(0.0..=1.0).contains(&self.noise.merged_fraction) {
            return Err(Error::invalid("merged_fraction must lie in [0, 1]"));
        }
        for &[a, b] in &self.noise.merge_pairs {
            if a >= self.objects.len() || b >= self.objects.len() || a == b {
                return Err(Error::invalid(format!("merge pair [{a}, {b}] references a missing object")));
            }
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            "opaque-wall" | "opaque_wall" => opaque_wall(),
            "two-blob" | "two_blob" => two_blob(0.0),
            "two-blob-noisy" | "two_blob_noisy" => two_blob(0.2),
            other => {
                return Err(Error::invalid(format!(
                    "unknown preset '{other}' (expected {})",
                    PRESETS.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub const PRESETS: &[&str] = &["opaque-wall", "two-blob", "two-blob-noisy"];

fn opaque_wall() -> SceneSpec {
    SceneSpec {
        seed: 1,
        feature_dim: 4,
        objects: vec![ObjectSpec {
            name: "wall".into(),
            shape: Shape::Wall,
            count: 60 * 48,
            opacity: [0.999, 0.9999],
            center: [0.0, 0.0, 0.0],
            extent: [2.5, 2.0, 0.01],
            splat_scale: None,
            feature: None,
            kernel: KernelKind::Gaussian3D,
        }],
        views: ViewSpec {
            count: 3,
            width: 64,
            height: 48,
            radius: 3.0,
            arc_degrees: 20.0,
            elevation_degrees: 0.0,
            fov_degrees: 40.0,
            target: [0.0; 3],
        },
        noise: NoiseSpec::default(),
        require_separable: true,
    }
}

fn two_blob(merged_fraction: f64) -> SceneSpec {
    let blob = |name: &str, x: f64| ObjectSpec {
        name: name.into(),
        shape: Shape::Blob,
        count: 2000,
        opacity: [0.9, 0.99],
        center: [x, 0.0, 0.0],
        extent: [0.45, 0.45, 0.45],
        splat_scale: Some(0.03),
        feature: None,
        kernel: KernelKind::Gaussian3D,
    };
    SceneSpec {
        seed: 11,
        feature_dim: 8,
        objects: vec![blob("left", -0.6), blob("right", 0.6)],
        views: ViewSpec {
            count: 10,
            width: 160,
            height: 108,
            radius: 5.0,
            arc_degrees: 50.0,
            elevation_degrees: 10.0,
            fov_degrees: 32.0,
            target: [0.0; 3],
        },
        noise: NoiseSpec {
            merged_fraction,
            merge_pairs: vec![[0, 1]],
        },
        require_separable: true,
    }
}
