//! File formats: binary feature tensors, label maps and tables, splat PLYs,
//! camera lists, PGM masks, and the directory layouts built from them.

mod binary;
mod camera;
mod layout;
mod pgm;
mod ply;
mod tensor;

pub use camera::{decode_cameras, encode_cameras, read_cameras, write_cameras};
pub use layout::{
    create_dir, decode_queries, dense_path, encode_queries, label_path, load_observations, load_observations_discovered,
    observation_stems, read_masks, read_queries, table_path, write_masks, write_observations, write_queries,
};
pub use pgm::GrayImage;
pub use ply::{decode_ply, encode_ply, read_ply, write_ply};
pub use tensor::{coverage_path, read_field, write_field, FeatureTensor, LabelFeatures, LabelMap, LABEL_VERSION, TENSOR_VERSION};
