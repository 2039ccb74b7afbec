use image::GrayImage;
use rayon::prelude::*;

use super::SgbmParams;
use crate::error::{Error, Result};

/// Integer matching costs laid out as `[y][x][d]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    disparities: usize,
    sentinel: u32,
    costs: Vec<u32>,
}

impl CostVolume {
    /// Wraps raw `[y][x][d]` costs. `sentinel` is the cost stored for
    /// disparities whose match falls outside the right image.
    pub fn from_raw(
        width: usize,
        height: usize,
        disparities: usize,
        sentinel: u32,
        costs: Vec<u32>,
    ) -> Result<Self> {
        if disparities == 0 {
            return Err(Error::invalid("cost volume", "zero disparities"));
        }
        if costs.len() != width * height * disparities {
            return Err(Error::invalid(
                "cost volume",
                format!(
                    "{width}x{height}x{disparities} volume needs {} costs, got {}",
                    width * height * disparities,
                    costs.len()
                ),
            ));
        }
        Ok(Self {
            width,
            height,
            disparities,
            sentinel,
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn disparities(&self) -> usize {
        self.disparities
    }

    /// Cost assigned to out-of-image matches.
    pub fn sentinel(&self) -> u32 {
        self.sentinel
    }

    pub fn raw(&self) -> &[u32] {
        &self.costs
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, d: usize) -> u32 {
        self.costs[(y * self.width + x) * self.disparities + d]
    }

    /// All disparity costs of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u32] {
        let start = (y * self.width + x) * self.disparities;
        &self.costs[start..start + self.disparities]
    }
}

/// Largest SAD a window of the given radius can produce, plus one.
pub fn sentinel_cost(window_radius: u32) -> u32 {
    let side = 2 * window_radius + 1;
    side * side * 255 + 1
}

/// Sum of absolute differences over a `(2r+1)²` window:
/// `cost(x,y,d) = Σ |L(x+i, y+j) − R(x+i−d, y+j)|`, where every window
/// coordinate is clamped into the image independently. Disparities with
/// `x − d < 0` get the sentinel cost.
pub fn compute_cost_volume(
    left: &GrayImage,
    right: &GrayImage,
    params: &SgbmParams,
) -> Result<CostVolume> {
    if left.dimensions() != right.dimensions() {
        let (lw, lh) = left.dimensions();
        let (rw, rh) = right.dimensions();
        return Err(Error::DimensionMismatch {
            expected: (lw as usize, lh as usize),
            actual: (rw as usize, rh as usize),
        });
    }
    if params.num_disparities == 0 {
        return Err(Error::invalid("sgbm params", "zero disparities"));
    }
    let (w, h) = (left.width() as usize, left.height() as usize);
    let disp = params.num_disparities as usize;
    let r = params.window_radius as usize;
    let sentinel = sentinel_cost(params.window_radius);
    if w == 0 || h == 0 {
        return CostVolume::from_raw(w, h, disp, sentinel, Vec::new());
    }
    let l = left.as_raw();
    let rt = right.as_raw();
    let clamp_x = |u: isize| u.clamp(0, w as isize - 1) as usize;

    // Horizontal window sums per row.
    let mut horizontal = vec![0u32; w * h * disp];
    horizontal
        .par_chunks_mut(w * disp)
        .enumerate()
        .for_each(|(y, row)| {
            let lrow = &l[y * w..(y + 1) * w];
            let rrow = &rt[y * w..(y + 1) * w];
            let mut diffs = vec![0u32; w + 2 * r];
            for d in 0..disp {
                for (k, a) in diffs.iter_mut().enumerate() {
                    let u = k as isize - r as isize;
                    let lv = lrow[clamp_x(u)] as i32;
                    let rv = rrow[clamp_x(u - d as isize)] as i32;
                    *a = (lv - rv).unsigned_abs();
                }
                let mut sum: u32 = diffs[..2 * r + 1].iter().sum();
                row[d] = sum;
                for x in 1..w {
                    sum = sum + diffs[x + 2 * r] - diffs[x - 1];
                    row[x * disp + d] = sum;
                }
            }
        });

    let mut costs = vec![0u32; w * h * disp];
    costs
        .par_chunks_mut(w * disp)
        .enumerate()
        .for_each(|(y, row)| {
            for j in -(r as isize)..=(r as isize) {
                let yy = (y as isize + j).clamp(0, h as isize - 1) as usize;
                let src = &horizontal[yy * w * disp..(yy + 1) * w * disp];
                for (c, s) in row.iter_mut().zip(src) {
                    *c += s;
                }
            }
            for x in 0..w.min(disp) {
                for d in x + 1..disp {
                    row[x * disp + d] = sentinel;
                }
            }
        });

    CostVolume::from_raw(w, h, disp, sentinel, costs)
}
