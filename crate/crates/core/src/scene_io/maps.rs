//! Dense per-pixel maps and the class palette.

use std::collections::HashSet;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width * height != len {
        return Err(Error::invalid(
            "map",
            format!("{width}x{height} map needs {} values, got {len}", width * height),
        ));
    }
    Ok(())
}

/// Metric z-depth per pixel. Values `<= 0` mark invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub const INVALID: f32 = 0.0;

    /// Builds a map from row-major values. Non-finite entries are stored as
    /// invalid.
    pub fn new(width: usize, height: usize, mut values: Vec<f32>) -> Result<Self> {
        check_len(width, height, values.len())?;
        for v in &mut values {
            if !v.is_finite() || *v < 0.0 {
                *v = Self::INVALID;
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("length matches")
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self::filled(width, height, Self::INVALID)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Depth at `(x, y)` if valid.
    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> Option<f32> {
        let v = self.get(x, y);
        (v > 0.0).then_some(v)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f32) {
        self.values[y * self.width + x] = if depth.is_finite() && depth > 0.0 {
            depth
        } else {
            Self::INVALID
        };
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.values[y * self.width + x] = Self::INVALID;
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn validity_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > 0.0).collect()
    }
}

/// Horizontal disparity per pixel in the left view. Negative means invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DisparityMap {
    pub const INVALID: f32 = -1.0;

    pub fn new(width: usize, height: usize, mut values: Vec<f32>) -> Result<Self> {
        check_len(width, height, values.len())?;
        for v in &mut values {
            if !v.is_finite() {
                *v = Self::INVALID;
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let v = self.values[y * self.width + x];
        (v >= 0.0).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.0).count()
    }
}

/// Ordered class names with display colours. The class called `"sky"` is
/// the only name the pipeline interprets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassPalette {
    names: Vec<String>,
    colors: Vec<[u8; 3]>,
    sky_index: Option<usize>,
}

pub const SKY_CLASS: &str = "sky";

#[derive(Serialize, Deserialize)]
struct PaletteEntry {
    name: String,
    color: [u8; 3],
}

#[derive(Serialize, Deserialize)]
pub(crate) struct PaletteFile {
    classes: Vec<PaletteEntry>,
}

impl ClassPalette {
    pub fn new(names: Vec<String>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if names.is_empty() || names.len() > 256 {
            return Err(Error::invalid(
                "palette",
                format!("class count must be in 1..=256, got {}", names.len()),
            ));
        }
        if names.len() != colors.len() {
            return Err(Error::invalid(
                "palette",
                format!("{} names but {} colors", names.len(), colors.len()),
            ));
        }
        let unique_names: HashSet<&str> = names.iter().map(String::as_str).collect();
        if unique_names.len() != names.len() {
            return Err(Error::invalid("palette", "class names must be unique"));
        }
        let unique_colors: HashSet<[u8; 3]> = colors.iter().copied().collect();
        if unique_colors.len() != colors.len() {
            return Err(Error::invalid("palette", "class colors must be unique"));
        }
        let sky_index = names.iter().position(|n| n == SKY_CLASS);
        Ok(Self {
            names,
            colors,
            sky_index,
        })
    }

    /// Single-class palette used when a sequence ships without one.
    pub fn unlabeled() -> Self {
        Self::new(vec!["unlabeled".into()], vec![[200, 200, 200]]).expect("valid palette")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn color(&self, label: u8) -> [u8; 3] {
        self.colors
            .get(label as usize)
            .copied()
            .unwrap_or([128, 128, 128])
    }

    pub fn sky_index(&self) -> Option<usize> {
        self.sky_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub(crate) fn to_file(&self) -> PaletteFile {
        PaletteFile {
            classes: self
                .names
                .iter()
                .zip(&self.colors)
                .map(|(name, &color)| PaletteEntry {
                    name: name.clone(),
                    color,
                })
                .collect(),
        }
    }

    pub(crate) fn from_file(file: PaletteFile) -> Result<Self> {
        let (names, colors) = file.classes.into_iter().map(|e| (e.name, e.color)).unzip();
        Self::new(names, colors)
    }
}

/// Per-pixel class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    classes: usize,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>, classes: usize) -> Result<Self> {
        check_len(width, height, labels.len())?;
        if classes == 0 || classes > 256 {
            return Err(Error::invalid(
                "label map",
                format!("class count must be in 1..=256, got {classes}"),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad as u32,
                classes,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            classes,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8, classes: usize) -> Result<Self> {
        Self::new(width, height, vec![label; width * height], classes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// Per-pixel class probabilities, stored pixel-major (`C` values per pixel).
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticScores {
    width: usize,
    height: usize,
    classes: usize,
    scores: Vec<f32>,
}

const SCORE_SUM_TOLERANCE: f32 = 1e-4;

impl SemanticScores {
    pub fn new(width: usize, height: usize, classes: usize, scores: Vec<f32>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::invalid("scores", "zero classes"));
        }
        if scores.len() != width * height * classes {
            return Err(Error::invalid(
                "scores",
                format!(
                    "{width}x{height}x{classes} scores need {} values, got {}",
                    width * height * classes,
                    scores.len()
                ),
            ));
        }
        for (i, pixel) in scores.chunks_exact(classes).enumerate() {
            if pixel.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
                return Err(Error::invalid(
                    "scores",
                    format!("negative or non-finite score at pixel {i}"),
                ));
            }
            let sum: f32 = pixel.iter().sum();
            if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                return Err(Error::invalid(
                    "scores",
                    format!("scores at pixel {i} sum to {sum}"),
                ));
            }
        }
        Ok(Self {
            width,
            height,
            classes,
            scores,
        })
    }

    /// One-hot encoding of a label map.
    pub fn from_labels(labels: &LabelMap) -> Self {
        let classes = labels.classes();
        let mut scores = vec![0.0; labels.labels().len() * classes];
        for (i, &l) in labels.labels().iter().enumerate() {
            scores[i * classes + l as usize] = 1.0;
        }
        Self {
            width: labels.width(),
            height: labels.height(),
            classes,
            scores,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn raw(&self) -> &[f32] {
        &self.scores
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.classes;
        &self.scores[start..start + self.classes]
    }

    /// Per-pixel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> LabelMap {
        let labels = self
            .scores
            .chunks_exact(self.classes)
            .map(|p| argmax_lowest(p) as u8)
            .collect();
        LabelMap::new(self.width, self.height, labels, self.classes).expect("argmax < classes")
    }
}

/// Index of the largest value, preferring the lowest index on ties.
pub fn argmax_lowest(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One colour image of a sequence.
#[derive(Clone, Debug)]
pub struct ImageFrame {
    pub frame_id: u32,
    pub pixels: RgbImage,
}

impl ImageFrame {
    pub fn width(&self) -> usize {
        self.pixels.width() as usize
    }

    pub fn height(&self) -> usize {
        self.pixels.height() as usize
    }

    /// ITU-R 601 luma, rounded to the nearest integer.
    pub fn to_gray(&self) -> GrayImage {
        rgb_to_gray(&self.pixels)
    }
}

pub fn rgb_to_gray(rgb: &RgbImage) -> GrayImage {
    GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
        let [r, g, b] = rgb.get_pixel(x, y).0;
        let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
        image::Luma([luma.round().min(255.0) as u8])
    })
}
