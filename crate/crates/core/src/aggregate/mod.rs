//! Post-lifting aggregation: cluster lifted features, project cluster labels
//! back to the views, and drop observation masks that disagree with them.

mod cluster;
mod filter;
mod masks;

pub use cluster::{
    cluster_features, onehot, project_clusters, project_clusters_with, ClusterAssignment, ClusterParams,
    LabelEncoding, OneHot,
};
pub use filter::{filter_observations, validate_tau, MaskDecision, MaskReport, DEFAULT_TAU};
pub use masks::{iou, Mask, MaskSet};
