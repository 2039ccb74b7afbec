//! Interchange file formats: depth and label PNGs, score blobs, palette JSON.
//!
//! * Depth: 16-bit grayscale PNG holding millimetres, 0 for invalid pixels.
//! * Labels: 8-bit grayscale PNG of class indices.
//! * Scores: `b"SSCR"`, then width, height, class count as little-endian
//!   `u32`, then `width * height * C` little-endian `f32` in pixel-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::maps::{ClassPalette, DepthMap, LabelMap, PaletteFile, SemanticScores};
use crate::error::{Error, Result};

/// Largest depth that fits the 16-bit millimetre encoding (exclusive).
pub const MAX_ENCODABLE_DEPTH: f32 = 65.535;

pub const SCORES_MAGIC: [u8; 4] = *b"SSCR";

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// Millimetre encoding of a depth value. Valid depths never encode to 0.
pub fn encode_depth_mm(depth: f32) -> u16 {
    if depth > 0.0 {
        ((depth as f64 * 1000.0).round() as u16).max(1)
    } else {
        0
    }
}

pub fn write_depth_png(depth: &DepthMap, path: &Path) -> Result<()> {
    let out_of_range = depth
        .values()
        .iter()
        .filter(|&&d| d >= MAX_ENCODABLE_DEPTH)
        .count();
    if out_of_range > 0 {
        return Err(Error::DepthOutOfRange {
            count: out_of_range,
        });
    }
    let raw: Vec<u16> = depth.values().iter().map(|&d| encode_depth_mm(d)).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer sized from map");
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(image_err(path))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected 16-bit grayscale depth, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(|mm| mm as f32 / 1000.0).collect();
    DepthMap::new(w as usize, h as usize, values)
}

pub fn write_labels_png(labels: &LabelMap, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(
        labels.width() as u32,
        labels.height() as u32,
        labels.labels().to_vec(),
    )
    .expect("buffer sized from map");
    ensure_parent(path)?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

pub fn read_labels_png(path: &Path, palette: &ClassPalette) -> Result<LabelMap> {
    let img = image::open(path).map_err(image_err(path))?;
    let img = match img {
        image::DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit grayscale labels, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = img.dimensions();
    LabelMap::new(w as usize, h as usize, img.into_raw(), palette.len())
}

pub fn write_scores(scores: &SemanticScores, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(&SCORES_MAGIC);
    for v in [scores.width(), scores.height(), scores.classes()] {
        header.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.write_all(&header).map_err(|e| Error::io(path, e))?;
    for s in scores.raw() {
        out.write_all(&s.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<SemanticScores> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 || bytes[..4] != SCORES_MAGIC {
        return Err(format_err("missing score blob header".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (field(4), field(8), field(12));
    let expected = 16 + w * h * c * 4;
    if bytes.len() != expected {
        return Err(format_err(format!(
            "{w}x{h}x{c} blob should be {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let scores = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    SemanticScores::new(w, h, c, scores)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_palette(path: &Path) -> Result<ClassPalette> {
    ClassPalette::from_file(read_json::<PaletteFile>(path)?)
}

pub fn write_palette(palette: &ClassPalette, path: &Path) -> Result<()> {
    write_json(&palette.to_file(), path)
}
