use rayon::prelude::*;

use super::cost::CostVolume;
use super::SgbmParams;
use crate::scene_io::{DepthMap, DisparityMap, StereoRig};

/// Disparities at or below this many pixels map to invalid depth.
pub const MIN_DISPARITY: f32 = 1e-3;

/// Index of the smallest value, lowest index on ties.
#[inline]
fn argmin(costs: &[u32]) -> usize {
    let mut best = 0;
    for (d, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = d;
        }
    }
    best
}

/// Parabola vertex offset through `(−1, a)`, `(0, b)`, `(1, c)`.
#[inline]
fn subpixel_offset(a: u32, b: u32, c: u32) -> f64 {
    let denom = 2.0 * (a as f64 + c as f64 - 2.0 * b as f64);
    if denom <= 0.0 {
        return 0.0;
    }
    ((a as f64 - c as f64) / denom).clamp(-0.5, 0.5)
}

/// True when some disparity further than one step from `best` is within the
/// uniqueness ratio of the winning cost.
fn ambiguous(costs: &[u32], best: usize, ratio: f64) -> bool {
    let limit = ratio * costs[best] as f64;
    costs
        .iter()
        .enumerate()
        .any(|(d, &c)| d.abs_diff(best) > 1 && c as f64 <= limit)
}

/// Winner-take-all disparity of the right view: for right pixel `xr`, the
/// `d` minimising `S(xr + d, y, d)` over in-image matches.
fn right_disparities(s: &CostVolume, y: usize) -> Vec<usize> {
    let (w, nd) = (s.width(), s.disparities());
    (0..w)
        .map(|xr| {
            let mut best = 0;
            let mut best_cost = u32::MAX;
            for d in 0..nd.min(w - xr) {
                let c = s.get(xr + d, y, d);
                if c < best_cost {
                    best_cost = c;
                    best = d;
                }
            }
            best
        })
        .collect()
}

/// Winner-take-all over aggregated costs with parabolic sub-pixel
/// refinement, a uniqueness test and an optional left-right check.
pub fn extract_disparity(aggregated: &CostVolume, params: &SgbmParams) -> DisparityMap {
    let (w, h, nd) = (
        aggregated.width(),
        aggregated.height(),
        aggregated.disparities(),
    );
    let mut values = vec![DisparityMap::INVALID; w * h];
    if w > 0 {
        values.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let right = params.lr_max_diff.map(|_| right_disparities(aggregated, y));
            for (x, out) in row.iter_mut().enumerate() {
                let costs = aggregated.pixel(x, y);
                let best = argmin(costs);
                if best > x || ambiguous(costs, best, params.uniqueness_ratio) {
                    continue;
                }
                if let (Some(limit), Some(right)) = (params.lr_max_diff, &right) {
                    if best.abs_diff(right[x - best]) > limit as usize {
                        continue;
                    }
                }
                let offset = if best > 0 && best + 1 < nd {
                    subpixel_offset(costs[best - 1], costs[best], costs[best + 1])
                } else {
                    0.0
                };
                *out = (best as f64 + offset) as f32;
            }
        });
    }
    DisparityMap::new(w, h, values).expect("values are finite")
}

/// `depth = fx · baseline / disparity`, invalid for disparities at or below
/// [`MIN_DISPARITY`].
pub fn disparity_to_depth(disparity: &DisparityMap, rig: &StereoRig) -> DepthMap {
    let fb = rig.intrinsics.fx * rig.baseline;
    let values = disparity
        .values()
        .iter()
        .map(|&d| {
            if d > MIN_DISPARITY {
                (fb / d as f64) as f32
            } else {
                DepthMap::INVALID
            }
        })
        .collect();
    DepthMap::new(disparity.width(), disparity.height(), values).expect("values are finite")
}
