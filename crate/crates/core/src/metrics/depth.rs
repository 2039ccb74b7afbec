use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_io::DepthMap;

/// Deviation thresholds are `k · CURVE_STEP` for `k = 1..=CURVE_STEPS`.
pub const CURVE_STEP: f64 = 0.1;
pub const CURVE_STEPS: usize = 50;
/// Width of the ground-truth distance bins.
pub const DISTANCE_BIN: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthErrorReport {
    pub abs_rel: f64,
    pub rms: f64,
    pub n_valid: usize,
    /// `(threshold m, fraction of pixels with |error| < threshold)`.
    pub deviation_curve: Vec<(f64, f64)>,
    /// `(bin centre m, rms m)` over ground-truth distance bins with data.
    pub rms_by_distance: Vec<(f64, f64)>,
}

/// Running sums for depth errors, so that errors over many frames can be
/// pooled exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DepthErrorAccumulator {
    abs_rel_sum: f64,
    sq_sum: f64,
    n: usize,
    below: Vec<usize>,
    bins: Vec<(f64, usize)>,
}

impl DepthErrorAccumulator {
    pub fn new() -> Self {
        Self {
            below: vec![0; CURVE_STEPS],
            ..Self::default()
        }
    }

    pub fn add_pair(&mut self, gt: f64, pred: f64) {
        if self.below.is_empty() {
            self.below = vec![0; CURVE_STEPS];
        }
        let err = gt - pred;
        self.abs_rel_sum += err.abs() / gt;
        self.sq_sum += err * err;
        self.n += 1;
        for (k, count) in self.below.iter_mut().enumerate() {
            if err.abs() < (k + 1) as f64 * CURVE_STEP {
                *count += 1;
            }
        }
        let bin = (gt / DISTANCE_BIN).floor() as usize;
        if self.bins.len() <= bin {
            self.bins.resize(bin + 1, (0.0, 0));
        }
        self.bins[bin].0 += err * err;
        self.bins[bin].1 += 1;
    }

    /// Adds every pixel valid in both maps.
    pub fn add(&mut self, pred: &DepthMap, gt: &DepthMap) -> Result<()> {
        if pred.size() != gt.size() {
            return Err(Error::DimensionMismatch {
                expected: gt.size(),
                actual: pred.size(),
            });
        }
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            if p > 0.0 && g > 0.0 {
                self.add_pair(g as f64, p as f64);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &DepthErrorAccumulator) {
        self.abs_rel_sum += other.abs_rel_sum;
        self.sq_sum += other.sq_sum;
        self.n += other.n;
        if self.below.is_empty() {
            self.below = vec![0; CURVE_STEPS];
        }
        for (a, b) in self.below.iter_mut().zip(&other.below) {
            *a += b;
        }
        if self.bins.len() < other.bins.len() {
            self.bins.resize(other.bins.len(), (0.0, 0));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn report(&self) -> Result<DepthErrorReport> {
        if self.n == 0 {
            return Err(Error::NoValidOverlap);
        }
        let n = self.n as f64;
        Ok(DepthErrorReport {
            abs_rel: self.abs_rel_sum / n,
            rms: (self.sq_sum / n).sqrt(),
            n_valid: self.n,
            deviation_curve: self
                .below
                .iter()
                .enumerate()
                .map(|(k, &c)| ((k + 1) as f64 * CURVE_STEP, c as f64 / n))
                .collect(),
            rms_by_distance: self
                .bins
                .iter()
                .enumerate()
                .filter(|(_, b)| b.1 > 0)
                .map(|(i, b)| ((i as f64 + 0.5) * DISTANCE_BIN, (b.0 / b.1 as f64).sqrt()))
                .collect(),
        })
    }
}

/// Absolute relative error `(1/N) Σ |d − d̂| / d` and RMS over pixels valid
/// in both maps, plus the deviation curve and RMS per distance bin.
pub fn depth_errors(pred: &DepthMap, gt: &DepthMap) -> Result<DepthErrorReport> {
    let mut acc = DepthErrorAccumulator::new();
    acc.add(pred, gt)?;
    acc.report()
}
