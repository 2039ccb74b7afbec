//! Incremental semantic 3D reconstruction from posed stereo sequences.
//!
//! The crate is organised along the processing chain:
//!
//! * [`scene_io`]: camera, map and mesh types and their file formats.
//! * [`stereo`]: semi-global block matching and disparity-to-depth.
//! * [`filtering`]: sky removal, depth-gradient and erosion filters.
//! * [`fusion`]: semantic TSDF integration and marching-cubes meshing.
//! * [`metrics`]: depth, segmentation and 3D reconstruction measures.
//! * [`pipeline`]: configuration, orchestration and a synthetic test scene.

pub mod error;
pub mod filtering;
pub mod fusion;
pub mod metrics;
pub mod pipeline;
pub mod scene_io;
pub mod stereo;

pub use error::{Error, Result};
