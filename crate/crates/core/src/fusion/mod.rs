//! Semantic TSDF fusion and labelled mesh extraction.

mod grid;
mod mesh;

use serde::{Deserialize, Serialize};

pub use grid::{integrate_frame, ChunkKey, FrameSemantics, TsdfVoxel, VoxelGrid, CHUNK_SIZE};
pub use mesh::{export_mesh, extract_mesh, import_mesh, SemanticMesh};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// Voxel edge length, meters.
    pub voxel_size: f64,
    /// Truncation distance, meters. `None` means four voxels.
    pub truncation: Option<f64>,
    pub clip_near: f64,
    pub clip_far: f64,
    /// Voxels observed with less weight are dropped by pruning.
    pub min_weight: f32,
    pub max_weight: f32,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.03,
            truncation: None,
            clip_near: 0.5,
            clip_far: 8.0,
            min_weight: 2.0,
            max_weight: 100.0,
        }
    }
}

impl FusionParams {
    pub fn truncation(&self) -> f64 {
        self.truncation.unwrap_or(4.0 * self.voxel_size)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::invalid("fusion params", reason));
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return fail(format!("voxel_size must be > 0, got {}", self.voxel_size));
        }
        let trunc = self.truncation();
        if !(trunc >= self.voxel_size && trunc.is_finite()) {
            return fail(format!(
                "truncation {trunc} must be at least the voxel size {}",
                self.voxel_size
            ));
        }
        if !(self.clip_near > 0.0 && self.clip_far > self.clip_near && self.clip_far.is_finite()) {
            return fail(format!(
                "need clip_far > clip_near > 0, got ({}, {})",
                self.clip_near, self.clip_far
            ));
        }
        if !(self.min_weight >= 0.0 && self.max_weight >= 1.0 && self.max_weight.is_finite()) {
            return fail(format!(
                "need min_weight >= 0 and max_weight >= 1, got ({}, {})",
                self.min_weight, self.max_weight
            ));
        }
        Ok(())
    }
}
