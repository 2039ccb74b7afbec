//! Depth, segmentation and 3D reconstruction evaluation.

mod depth;
mod reconstruction;
pub mod report;
mod segmentation;
pub mod spatial;

pub use depth::{
    depth_errors, DepthErrorAccumulator, DepthErrorReport, CURVE_STEP, CURVE_STEPS, DISTANCE_BIN,
};
pub use reconstruction::{
    accuracy_pct, cloud_to_surface, completeness_quantile, crop_ground_truth, read_labeled_points,
    reconstruction_report, semantic_3d_transfer, transfer_labels, write_labeled_points, GtToRecon,
    LabeledPoints, ReconToGt, ReconstructionReport, Surface,
};
pub use segmentation::{
    segmentation_scores, segmentation_scores_from_pairs, ConfusionMatrix, SegmentationReport,
};
