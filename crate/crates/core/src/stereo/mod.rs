//! Semi-global block matching on rectified stereo pairs.

mod aggregate;
mod cost;
mod disparity;

use image::GrayImage;
use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_directions, aggregate_path, aggregate_semiglobal, PathDirection};
pub use cost::{compute_cost_volume, sentinel_cost, CostVolume};
pub use disparity::{disparity_to_depth, extract_disparity, MIN_DISPARITY};

use crate::error::{Error, Result};
use crate::scene_io::{DepthMap, DisparityMap, ImageFrame, StereoRig};

/// Largest supported window radius.
pub const MAX_WINDOW_RADIUS: u32 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgbmParams {
    pub window_radius: u32,
    pub num_disparities: u32,
    pub p1: u32,
    pub p2: u32,
    /// 4 or 8 aggregation directions.
    pub paths: u32,
    /// `None` disables the left-right check.
    pub lr_max_diff: Option<u32>,
    pub uniqueness_ratio: f64,
}

impl SgbmParams {
    /// Default parameters for a given window radius, with penalties scaled
    /// by the window area.
    pub fn with_radius(window_radius: u32) -> Self {
        let area = (2 * window_radius + 1).pow(2);
        Self {
            window_radius,
            num_disparities: 64,
            p1: 8 * area,
            p2: 32 * area,
            paths: 8,
            lr_max_diff: Some(1),
            uniqueness_ratio: 1.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::invalid("sgbm params", reason));
        if self.num_disparities == 0 || !self.num_disparities.is_multiple_of(16) {
            return fail(format!(
                "num_disparities must be a positive multiple of 16, got {}",
                self.num_disparities
            ));
        }
        if self.p1 == 0 || self.p2 <= self.p1 {
            return fail(format!(
                "penalties need p2 > p1 > 0, got p1={} p2={}",
                self.p1, self.p2
            ));
        }
        if self.paths != 4 && self.paths != 8 {
            return fail(format!("paths must be 4 or 8, got {}", self.paths));
        }
        if self.window_radius > MAX_WINDOW_RADIUS {
            return fail(format!(
                "window_radius {} exceeds {MAX_WINDOW_RADIUS}",
                self.window_radius
            ));
        }
        if !(self.uniqueness_ratio >= 1.0 && self.uniqueness_ratio.is_finite()) {
            return fail(format!(
                "uniqueness_ratio must be >= 1, got {}",
                self.uniqueness_ratio
            ));
        }
        Ok(())
    }
}

impl Default for SgbmParams {
    fn default() -> Self {
        Self::with_radius(2)
    }
}

/// Full matching chain: cost volume, aggregation, disparity extraction.
pub fn compute_disparity(
    left: &GrayImage,
    right: &GrayImage,
    params: &SgbmParams,
) -> Result<DisparityMap> {
    params.validate()?;
    let cost = compute_cost_volume(left, right, params)?;
    let aggregated = aggregate_semiglobal(&cost, params);
    drop(cost);
    Ok(extract_disparity(&aggregated, params))
}

/// Metric depth for a rectified colour pair.
pub fn compute_depth(
    left: &ImageFrame,
    right: &ImageFrame,
    rig: &StereoRig,
    params: &SgbmParams,
) -> Result<DepthMap> {
    let disparity = compute_disparity(&left.to_gray(), &right.to_gray(), params)?;
    Ok(disparity_to_depth(&disparity, rig))
}
