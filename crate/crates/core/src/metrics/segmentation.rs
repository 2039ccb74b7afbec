use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_io::LabelMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    /// `confusion[gt][pred]` pixel counts.
    pub confusion: Vec<Vec<u64>>,
    pub overall_acc: f64,
    pub average_acc: f64,
    pub average_iou: f64,
    /// `None` for classes without ground-truth samples.
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_acc: Vec<Option<f64>>,
}

/// Confusion matrix accumulator over label pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    classes: usize,
    ignore: Vec<u8>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize, ignore: &[u8]) -> Self {
        Self {
            classes,
            ignore: ignore.to_vec(),
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Counts one pair. Pairs whose ground truth is ignored are skipped.
    pub fn add(&mut self, gt: u8, pred: u8) -> Result<()> {
        if self.ignore.contains(&gt) {
            return Ok(());
        }
        for label in [gt, pred] {
            if label as usize >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: label as u32,
                    classes: self.classes,
                });
            }
        }
        self.counts[gt as usize * self.classes + pred as usize] += 1;
        Ok(())
    }

    pub fn add_maps(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.size() != gt.size() {
            return Err(Error::DimensionMismatch {
                expected: gt.size(),
                actual: pred.size(),
            });
        }
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            self.add(g, p)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::invalid(
                "confusion matrix",
                format!("cannot merge {} and {} classes", self.classes, other.classes),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    /// Overall accuracy `trace / total`; per-class accuracy `diag / row sum`
    /// and IoU `TP / (TP + FP + FN)`, averaged over classes present in the
    /// ground truth. With no counted pixels every score is 0.
    pub fn report(&self) -> SegmentationReport {
        let c = self.classes;
        let confusion: Vec<Vec<u64>> = (0..c).map(|g| (0..c).map(|p| self.get(g, p)).collect()).collect();
        let total: u64 = self.counts.iter().sum();
        let trace: u64 = (0..c).map(|k| self.get(k, k)).sum();
        let mut per_class_iou = Vec::with_capacity(c);
        let mut per_class_acc = Vec::with_capacity(c);
        for k in 0..c {
            let row: u64 = confusion[k].iter().sum();
            let col: u64 = (0..c).map(|g| confusion[g][k]).sum();
            let tp = confusion[k][k];
            if row == 0 {
                per_class_iou.push(None);
                per_class_acc.push(None);
            } else {
                per_class_acc.push(Some(tp as f64 / row as f64));
                per_class_iou.push(Some(tp as f64 / (row + col - tp) as f64));
            }
        }
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        SegmentationReport {
            overall_acc: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            average_acc: mean(&per_class_acc),
            average_iou: mean(&per_class_iou),
            per_class_iou,
            per_class_acc,
            confusion,
        }
    }
}

/// Segmentation scores of `pred` against `gt`, skipping ground-truth labels
/// in `ignore`.
pub fn segmentation_scores(pred: &LabelMap, gt: &LabelMap, ignore: &[u8]) -> Result<SegmentationReport> {
    let classes = pred.classes().max(gt.classes());
    let mut m = ConfusionMatrix::new(classes, ignore);
    m.add_maps(pred, gt)?;
    Ok(m.report())
}

/// Same as [`segmentation_scores`] over paired label slices.
pub fn segmentation_scores_from_pairs(
    pred: &[u8],
    gt: &[u8],
    classes: usize,
    ignore: &[u8],
) -> Result<SegmentationReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: (gt.len(), 1),
            actual: (pred.len(), 1),
        });
    }
    let mut m = ConfusionMatrix::new(classes, ignore);
    for (&p, &g) in pred.iter().zip(gt) {
        m.add(g, p)?;
    }
    Ok(m.report())
}
