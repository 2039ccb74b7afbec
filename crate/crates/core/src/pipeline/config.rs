use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::FilterParams;
use crate::fusion::FusionParams;
use crate::scene_io::read_json;
use crate::stereo::SgbmParams;

/// Where the depth and semantics fed to filtering come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinedSource {
    /// Stereo depth only, no semantics.
    #[default]
    RawStereo,
    /// Per-frame files under `maps_dir`: `depth/%06d.png`,
    /// `labels/%06d.png` and `scores/%06d.bin`.
    ExternalMaps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Depth errors against `gt_depth/`.
    pub depth: bool,
    /// 2D segmentation scores against `gt_labels/`.
    pub segmentation: bool,
    /// Mesh against `gt_points.ply`, including nearest-vertex label transfer.
    pub reconstruction: bool,
    /// Also evaluate against ground truth cropped at this height.
    pub crop_z: Option<f64>,
    /// Accuracy distance threshold, meters.
    pub threshold: f64,
    /// Completeness quantile.
    pub quantile: f64,
    /// Ground-truth classes left out of segmentation scores.
    pub ignore_classes: Vec<u8>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            depth: true,
            segmentation: true,
            reconstruction: true,
            crop_z: Some(1.0),
            threshold: 0.05,
            quantile: 0.9,
            ignore_classes: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid(
                "eval config",
                format!("threshold must be > 0, got {}", self.threshold),
            ));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::invalid(
                "eval config",
                format!("quantile must be in (0, 1], got {}", self.quantile),
            ));
        }
        if self.crop_z.is_some_and(|z| !z.is_finite()) {
            return Err(Error::invalid("eval config", "crop_z must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub sequence: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub refined_source: RefinedSource,
    #[serde(default)]
    pub maps_dir: Option<PathBuf>,
    #[serde(default)]
    pub first_frame: u32,
    #[serde(default)]
    pub max_frames: Option<usize>,
    #[serde(default)]
    pub stereo: SgbmParams,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub fusion: FusionParams,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Default parameters for a sequence and output directory.
    pub fn new(sequence: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            sequence: sequence.into(),
            output_dir: output_dir.into(),
            refined_source: RefinedSource::RawStereo,
            maps_dir: None,
            first_frame: 0,
            max_frames: None,
            stereo: SgbmParams::default(),
            filter: FilterParams::default(),
            fusion: FusionParams::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Reads a JSON config. Relative paths are taken from the config file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.sequence);
        resolve(&mut config.output_dir);
        if let Some(m) = config.maps_dir.as_mut() {
            resolve(m);
        }
        Ok(config)
    }

    /// Checks parameters and that the referenced inputs exist.
    pub fn validate(&self) -> Result<()> {
        self.stereo.validate()?;
        self.filter.validate()?;
        self.fusion.validate()?;
        self.eval.validate()?;
        if !self.sequence.is_dir() {
            return Err(Error::invalid(
                "pipeline config",
                format!("sequence directory {} does not exist", self.sequence.display()),
            ));
        }
        if self.refined_source == RefinedSource::ExternalMaps {
            match &self.maps_dir {
                None => {
                    return Err(Error::invalid(
                        "pipeline config",
                        "refined_source external_maps needs maps_dir",
                    ))
                }
                Some(dir) if !dir.is_dir() => {
                    return Err(Error::invalid(
                        "pipeline config",
                        format!("maps directory {} does not exist", dir.display()),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"sequence": "s", "output_dir": "o"}"#).unwrap();
        assert_eq!(c, PipelineConfig::new("s", "o"));
        assert_eq!(c.eval.crop_z, Some(1.0));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: std::result::Result<PipelineConfig, _> =
            serde_json::from_str(r#"{"sequence": "s", "output_dir": "o", "voxel": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"sequence": "seq", "output_dir": "/abs/out", "refined_source": "external_maps", "maps_dir": "maps"}"#,
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.sequence, dir.path().join("seq"));
        assert_eq!(c.output_dir, PathBuf::from("/abs/out"));
        assert_eq!(c.maps_dir, Some(dir.path().join("maps")));
        assert_eq!(c.refined_source, RefinedSource::ExternalMaps);
    }

    #[test]
    fn validation_checks_paths_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = PipelineConfig::new(dir.path(), dir.path().join("out"));
        c.validate().unwrap();
        c.refined_source = RefinedSource::ExternalMaps;
        assert!(c.validate().unwrap_err().is_validation());
        c.maps_dir = Some(dir.path().join("missing"));
        assert!(c.validate().unwrap_err().is_validation());
        c.maps_dir = Some(dir.path().to_path_buf());
        c.validate().unwrap();
        c.fusion.voxel_size = 0.0;
        assert!(c.validate().unwrap_err().is_validation());
        let mut c = PipelineConfig::new(dir.path().join("nope"), dir.path());
        assert!(c.validate().is_err());
        c.sequence = dir.path().to_path_buf();
        c.eval.quantile = 1.5;
        assert!(c.validate().is_err());
    }
}
