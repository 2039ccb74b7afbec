//! Semi-global cost aggregation along 1D image paths.
//!
//! Each path `r` accumulates
//! `L_r(p,d) = C(p,d) + min(L_r(p−r,d), L_r(p−r,d±1) + P1, min_k L_r(p−r,k) + P2) − min_k L_r(p−r,k)`,
//! and the aggregated volume is the sum of `L_r` over all paths.

use super::cost::CostVolume;
use super::SgbmParams;

/// Step `(dx, dy)` from a pixel's predecessor to the pixel itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathDirection {
    pub dx: i32,
    pub dy: i32,
}

impl PathDirection {
    pub const LEFT_TO_RIGHT: Self = Self { dx: 1, dy: 0 };
    pub const RIGHT_TO_LEFT: Self = Self { dx: -1, dy: 0 };
    pub const TOP_TO_BOTTOM: Self = Self { dx: 0, dy: 1 };
    pub const BOTTOM_TO_TOP: Self = Self { dx: 0, dy: -1 };

    /// The first `count` directions: the four axis-aligned paths, then the
    /// four diagonals.
    pub fn set(count: u32) -> Vec<Self> {
        let all = [
            Self::LEFT_TO_RIGHT,
            Self::RIGHT_TO_LEFT,
            Self::TOP_TO_BOTTOM,
            Self::BOTTOM_TO_TOP,
            Self { dx: 1, dy: 1 },
            Self { dx: -1, dy: -1 },
            Self { dx: -1, dy: 1 },
            Self { dx: 1, dy: -1 },
        ];
        all[..(count as usize).min(8)].to_vec()
    }
}

/// One recurrence step. Returns the minimum of `out`.
#[inline]
fn step(cost: &[u32], prev: Option<(&[u32], u32)>, p1: u32, p2: u32, out: &mut [u32]) -> u32 {
    let n = cost.len();
    let Some((prev, prev_min)) = prev else {
        out.copy_from_slice(cost);
        return cost.iter().copied().min().unwrap_or(0);
    };
    let jump = prev_min + p2;
    let mut out_min = u32::MAX;
    for d in 0..n {
        let mut best = prev[d].min(jump);
        if d > 0 {
            best = best.min(prev[d - 1] + p1);
        }
        if d + 1 < n {
            best = best.min(prev[d + 1] + p1);
        }
        let v = cost[d] + best - prev_min;
        out[d] = v;
        out_min = out_min.min(v);
    }
    out_min
}

/// Runs the recurrence along `dir`, handing each pixel's path costs to `sink`.
fn scan<F>(cost: &CostVolume, p1: u32, p2: u32, dir: PathDirection, mut sink: F)
where
    F: FnMut(usize, &[u32]),
{
    let (w, h, nd) = (cost.width(), cost.height(), cost.disparities());
    if w == 0 || h == 0 {
        return;
    }
    let raw = cost.raw();
    let mut prev_row = vec![0u32; w * nd];
    let mut prev_min = vec![0u32; w];
    let mut cur_row = vec![0u32; w * nd];
    let mut cur_min = vec![0u32; w];
    let mut pred = vec![0u32; nd];

    let rows: Box<dyn Iterator<Item = usize>> = if dir.dy < 0 {
        Box::new((0..h).rev())
    } else {
        Box::new(0..h)
    };
    let mut first_row = true;
    for y in rows {
        for k in 0..w {
            let x = if dir.dx < 0 { w - 1 - k } else { k };
            let px = x as isize - dir.dx as isize;
            let has_pred = px >= 0 && (px as usize) < w && (dir.dy == 0 || !first_row);
            let c = &raw[(y * w + x) * nd..(y * w + x + 1) * nd];
            let out_min = if has_pred {
                let px = px as usize;
                let (src, m) = if dir.dy == 0 {
                    (&cur_row[px * nd..(px + 1) * nd], cur_min[px])
                } else {
                    (&prev_row[px * nd..(px + 1) * nd], prev_min[px])
                };
                pred.copy_from_slice(src);
                step(c, Some((&pred, m)), p1, p2, &mut cur_row[x * nd..(x + 1) * nd])
            } else {
                step(c, None, p1, p2, &mut cur_row[x * nd..(x + 1) * nd])
            };
            cur_min[x] = out_min;
            sink(y * w + x, &cur_row[x * nd..(x + 1) * nd]);
        }
        std::mem::swap(&mut prev_row, &mut cur_row);
        std::mem::swap(&mut prev_min, &mut cur_min);
        first_row = false;
    }
}

/// Path costs `L_r` for a single direction.
pub fn aggregate_path(cost: &CostVolume, p1: u32, p2: u32, dir: PathDirection) -> CostVolume {
    let nd = cost.disparities();
    let mut out = vec![0u32; cost.raw().len()];
    scan(cost, p1, p2, dir, |pixel, l| {
        out[pixel * nd..(pixel + 1) * nd].copy_from_slice(l);
    });
    CostVolume::from_raw(cost.width(), cost.height(), nd, cost.sentinel(), out)
        .expect("same shape as input")
}

/// Sum of path costs over `params.paths` directions.
pub fn aggregate_semiglobal(cost: &CostVolume, params: &SgbmParams) -> CostVolume {
    aggregate_directions(cost, params.p1, params.p2, &PathDirection::set(params.paths))
}

pub fn aggregate_directions(
    cost: &CostVolume,
    p1: u32,
    p2: u32,
    directions: &[PathDirection],
) -> CostVolume {
    let nd = cost.disparities();
    let mut total = vec![0u32; cost.raw().len()];
    for &dir in directions {
        scan(cost, p1, p2, dir, |pixel, l| {
            for (t, v) in total[pixel * nd..(pixel + 1) * nd].iter_mut().zip(l) {
                *t += v;
            }
        });
    }
    CostVolume::from_raw(cost.width(), cost.height(), nd, cost.sentinel(), total)
        .expect("same shape as input")
}
