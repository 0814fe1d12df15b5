//! Query-time operations on a lifted field: attention scores, their 2D
//! projection, valley thresholding, segmentation, and evaluation metrics.

mod attention;
mod eval;
mod threshold;

pub use attention::{
    attention_scores, lambda_warning, render_attention, segment, AttentionMap, QueryEmbedding, BACKGROUND_SCORE,
};
pub use eval::{eval_cosine, eval_miou, pca_rgb, CosineReport, MaskIndex, MiouReport};
pub use threshold::{auto_threshold, auto_threshold_values, histogram, smooth, Threshold, ThresholdParams};
