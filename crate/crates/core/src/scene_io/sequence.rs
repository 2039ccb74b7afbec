//! Sequence directory layout and loading.
//!
//! ```text
//! root/calib.json          fx, fy, cx, cy, width, height, baseline_m
//! root/poses.txt           one row-major 3x4 camera-to-world matrix per line;
//!                          line k holds the pose of frame k
//! root/left/%06d.png
//! root/right/%06d.png
//! root/gt_depth/%06d.png   optional
//! root/gt_labels/%06d.png  optional
//! root/palette.json        optional
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;

use super::camera::{CalibrationFile, Pose, StereoRig};
use super::codec::{read_json, read_palette, write_json};
use super::maps::{ClassPalette, ImageFrame};
use crate::error::{Error, Result};

/// Path helpers for the on-disk sequence layout.
#[derive(Clone, Debug)]
pub struct SequenceLayout {
    root: PathBuf,
}

impl SequenceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("calib.json")
    }

    pub fn poses(&self) -> PathBuf {
        self.root.join("poses.txt")
    }

    pub fn palette(&self) -> PathBuf {
        self.root.join("palette.json")
    }

    pub fn gt_points(&self) -> PathBuf {
        self.root.join("gt_points.ply")
    }

    pub fn left_dir(&self) -> PathBuf {
        self.root.join("left")
    }

    pub fn left(&self, frame_id: u32) -> PathBuf {
        frame_path(&self.root.join("left"), frame_id, "png")
    }

    pub fn right(&self, frame_id: u32) -> PathBuf {
        frame_path(&self.root.join("right"), frame_id, "png")
    }

    pub fn gt_depth(&self, frame_id: u32) -> PathBuf {
        frame_path(&self.root.join("gt_depth"), frame_id, "png")
    }

    pub fn gt_labels(&self, frame_id: u32) -> PathBuf {
        frame_path(&self.root.join("gt_labels"), frame_id, "png")
    }
}

/// `dir/%06d.ext`
pub fn frame_path(dir: &Path, frame_id: u32, ext: &str) -> PathBuf {
    dir.join(format!("{frame_id:06}.{ext}"))
}

pub fn read_calibration(path: &Path) -> Result<StereoRig> {
    let file: CalibrationFile = read_json(path)?;
    StereoRig::try_from(file)
}

pub fn write_calibration(rig: &StereoRig, path: &Path) -> Result<()> {
    write_json(&CalibrationFile::from(rig), path)
}

pub fn read_poses(path: &Path) -> Result<Vec<Pose>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        let matrix: [f64; 12] = values.try_into().map_err(|v: Vec<f64>| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: expected 12 values, found {}", lineno + 1, v.len()),
        })?;
        poses.push(Pose::from_row_major(&matrix)?);
    }
    Ok(poses)
}

pub fn write_poses(poses: &[Pose], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for pose in poses {
        let row: Vec<String> = pose.to_row_major().iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(" ")).expect("write to vec");
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_rgb(path: &Path) -> Result<ImageFrame> {
    let frame_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let pixels = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    Ok(ImageFrame { frame_id, pixels })
}

/// Frame subset to load.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Ignore frames with a smaller id.
    pub first_frame: u32,
    /// Stop after this many frames.
    pub max_frames: Option<usize>,
}

/// A left/right pair with its camera-to-world pose.
#[derive(Clone, Debug)]
pub struct StereoFrame {
    pub left: ImageFrame,
    pub right: ImageFrame,
    pub pose: Pose,
}

impl StereoFrame {
    pub fn frame_id(&self) -> u32 {
        self.left.frame_id
    }
}

/// An opened sequence: calibration, poses and the frame list, with images
/// read on demand.
#[derive(Clone, Debug)]
pub struct Sequence {
    layout: SequenceLayout,
    rig: StereoRig,
    poses: BTreeMap<u32, Pose>,
    frame_ids: Vec<u32>,
    palette: Option<ClassPalette>,
}

impl Sequence {
    pub fn open(root: impl Into<PathBuf>, options: &LoadOptions) -> Result<Self> {
        let layout = SequenceLayout::new(root);
        let calib = layout.calibration();
        if !calib.is_file() {
            return Err(Error::Format {
                path: calib,
                reason: "missing calibration file".into(),
            });
        }
        let rig = read_calibration(&calib)?;

        let poses_path = layout.poses();
        let poses: BTreeMap<u32, Pose> = if poses_path.is_file() {
            read_poses(&poses_path)?
                .into_iter()
                .enumerate()
                .map(|(i, p)| (i as u32, p))
                .collect()
        } else {
            BTreeMap::new()
        };

        let mut ids = list_frame_ids(&layout.left_dir())?;
        ids.retain(|&id| id >= options.first_frame);
        let mut frame_ids = Vec::with_capacity(ids.len());
        for id in ids {
            if !poses.contains_key(&id) {
                warn!("frame {id}: no pose, skipping");
                continue;
            }
            frame_ids.push(id);
        }
        if let Some(max) = options.max_frames {
            frame_ids.truncate(max);
        }

        let palette_path = layout.palette();
        let palette = if palette_path.is_file() {
            Some(read_palette(&palette_path)?)
        } else {
            None
        };

        Ok(Self {
            layout,
            rig,
            poses,
            frame_ids,
            palette,
        })
    }

    pub fn layout(&self) -> &SequenceLayout {
        &self.layout
    }

    pub fn rig(&self) -> &StereoRig {
        &self.rig
    }

    pub fn frame_ids(&self) -> &[u32] {
        &self.frame_ids
    }

    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn palette(&self) -> Option<&ClassPalette> {
        self.palette.as_ref()
    }

    pub fn pose(&self, frame_id: u32) -> Option<&Pose> {
        self.poses.get(&frame_id)
    }

    pub fn load_frame(&self, frame_id: u32) -> Result<StereoFrame> {
        let pose = *self.poses.get(&frame_id).ok_or(Error::Frame {
            frame_id,
            source: Box::new(Error::invalid("frame", "no pose")),
        })?;
        let left = read_rgb(&self.layout.left(frame_id))?;
        let right = read_rgb(&self.layout.right(frame_id))?;
        let (w, h) = self.rig.intrinsics.size();
        for img in [&left, &right] {
            if (img.width(), img.height()) != (w, h) {
                return Err(Error::Frame {
                    frame_id,
                    source: Box::new(Error::DimensionMismatch {
                        expected: (w, h),
                        actual: (img.width(), img.height()),
                    }),
                });
            }
        }
        Ok(StereoFrame {
            left: ImageFrame {
                frame_id,
                pixels: left.pixels,
            },
            right: ImageFrame {
                frame_id,
                pixels: right.pixels,
            },
            pose,
        })
    }
}

/// Eagerly loads a whole sequence, ordered by frame id.
pub fn load_sequence(
    root: impl Into<PathBuf>,
    options: &LoadOptions,
) -> Result<(StereoRig, Vec<(ImageFrame, ImageFrame, Pose)>)> {
    let seq = Sequence::open(root, options)?;
    let frames = seq
        .frame_ids()
        .iter()
        .map(|&id| seq.load_frame(id).map(|f| (f.left, f.right, f.pose)))
        .collect::<Result<Vec<_>>>()?;
    Ok((seq.rig, frames))
}

/// Numeric stems of `dir/*.png`, ascending. A missing directory is empty.
pub fn list_frame_ids(dir: &Path) -> Result<Vec<u32>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u32>().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}
