//! Core image and geometry types plus every on-disk format shared between
//! the pipeline stages and external tools.

mod camera;
mod codec;
mod maps;
pub mod ply;
mod sequence;

pub use camera::{CameraIntrinsics, Pose, StereoRig};
pub use codec::{
    encode_depth_mm, read_depth_png, read_labels_png, read_palette, read_scores, write_depth_png,
    write_labels_png, write_palette, write_scores, MAX_ENCODABLE_DEPTH, SCORES_MAGIC,
};
pub(crate) use codec::{read_json, write_json};
pub use maps::{
    argmax_lowest, rgb_to_gray, ClassPalette, DepthMap, DisparityMap, ImageFrame, LabelMap,
    SemanticScores, SKY_CLASS,
};
pub use sequence::{
    frame_path, list_frame_ids, load_sequence, read_calibration, read_poses, read_rgb,
    write_calibration, write_poses, LoadOptions, Sequence, SequenceLayout, StereoFrame,
};
