//! Seed point clouds for sparse-view Gaussian splatting.

pub mod cloud;
pub mod geometry;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod regularize;
pub mod sfm;
pub mod spatial;
pub mod splat;
pub mod synth;
