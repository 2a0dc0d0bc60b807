//! File formats: PLY clouds and fields, text sparse models, images and the
//! flat pipeline configuration.

pub mod config;
pub mod image_io;
pub mod ply;
pub mod sparse;

pub use config::{config_hash, ConfigError};
pub use image_io::{read_image, write_ppm, ImageIoError};
pub use ply::{cloud_from_ply, cloud_to_ply, field_from_ply, field_to_ply, read_ply, write_ply, PlyError, PlyFile, PlyFormat};
pub use sparse::{read_sparse_model, SparseModel, SparseModelError};
