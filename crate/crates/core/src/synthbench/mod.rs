//! Synthetic scenes, observations with injected merged masks, and the
//! numerical checks built on them.

mod instances;
mod mc;
mod observe;
mod scene;
mod spec;
mod stats;
mod sweep;

pub use instances::{random_instance, Instance, InstanceLimits};
pub use mc::{background_gradient_sample, mc_background_gradient, McEstimate, MC_CHUNK, MC_COLORS, MC_MIN_SAMPLES};
pub use observe::{make_observations, merged_feature, silhouettes, MaskTag, SynthObservations, SILHOUETTE_COVERAGE};
pub use scene::{make_scene, orbit_views, SynthScene};
pub use spec::{NoiseSpec, ObjectSpec, SceneSpec, Shape, ViewSpec, PRESETS, SEPARABLE_COSINE};
pub use stats::{alpha_sum_stats, overall_alpha_mean, AlphaSumStats};
pub use sweep::{lambda_sweep, lambda_sweep_scene, lambda_sweep_primitives, lambda_sweep_views, SweepPoint, SWEEP_DIM, SWEEP_LAMBDAS};
