use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, RefinedSource};
use crate::error::{Error, Result};
use crate::filtering::{apply_filters, FilterParams};
use crate::fusion::{export_mesh, extract_mesh, integrate_frame, FrameSemantics, FusionParams, SemanticMesh, VoxelGrid};
use crate::metrics::report::{
    depth_table, deviation_curve_csv, reconstruction_table, rms_by_distance_csv, segmentation_table,
};
use crate::metrics::{
    crop_ground_truth, read_labeled_points, reconstruction_report, semantic_3d_transfer, ConfusionMatrix,
    DepthErrorAccumulator, DepthErrorReport, ReconstructionReport, SegmentationReport,
};
use crate::scene_io::{
    frame_path, read_depth_png, read_labels_png, read_scores, write_json, CameraIntrinsics, ClassPalette,
    DepthMap, LabelMap, LoadOptions, Pose, SemanticScores, Sequence,
};
use crate::stereo::compute_depth;

/// Incremental filter-and-fuse state. The mesh after any frame depends only
/// on the frames integrated so far.
#[derive(Clone, Debug)]
pub struct Reconstructor {
    grid: VoxelGrid,
    palette: ClassPalette,
    intrinsics: CameraIntrinsics,
    filter: FilterParams,
    frames: usize,
}

impl Reconstructor {
    pub fn new(
        fusion: FusionParams,
        filter: FilterParams,
        palette: ClassPalette,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        filter.validate()?;
        intrinsics.validate()?;
        Ok(Self {
            grid: VoxelGrid::new(fusion, palette.len())?,
            palette,
            intrinsics,
            filter,
            frames: 0,
        })
    }

    /// Filters one frame's depth and fuses it. Scores take precedence over
    /// labels for fusion; either one drives sky removal. Returns the filtered
    /// depth.
    pub fn integrate(
        &mut self,
        depth: &DepthMap,
        labels: Option<&LabelMap>,
        scores: Option<&SemanticScores>,
        pose: &Pose,
    ) -> Result<DepthMap> {
        let argmax = match (labels, scores) {
            (None, Some(s)) => Some(s.argmax()),
            _ => None,
        };
        let filter_labels = labels.or(argmax.as_ref());
        let filtered = apply_filters(depth, filter_labels, &self.palette, &self.filter)?;
        let semantics = match (scores, labels) {
            (Some(s), _) => FrameSemantics::Scores(s),
            (None, Some(l)) => FrameSemantics::Labels(l),
            (None, None) => FrameSemantics::None,
        };
        integrate_frame(&mut self.grid, &filtered, semantics, pose, &self.intrinsics)?;
        self.frames += 1;
        Ok(filtered)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn palette(&self) -> &ClassPalette {
        &self.palette
    }

    /// Mesh of the current state, leaving the grid untouched.
    pub fn snapshot(&self) -> SemanticMesh {
        let mut grid = self.grid.clone();
        grid.prune();
        extract_mesh(&grid, &self.palette)
    }

    pub fn finish(mut self) -> SemanticMesh {
        self.grid.prune();
        extract_mesh(&self.grid, &self.palette)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReports {
    pub frames: usize,
    pub depth: Option<DepthErrorReport>,
    pub segmentation: Option<SegmentationReport>,
    pub reconstruction: Option<ReconstructionReport>,
    pub reconstruction_cropped: Option<ReconstructionReport>,
    pub semantic_3d: Option<SegmentationReport>,
}

impl PipelineReports {
    pub fn is_empty(&self) -> bool {
        self.depth.is_none()
            && self.segmentation.is_none()
            && self.reconstruction.is_none()
            && self.reconstruction_cropped.is_none()
            && self.semantic_3d.is_none()
    }

    /// Plain-text tables of every report present.
    pub fn to_text(&self, crop_z: Option<f64>) -> String {
        let mut out = format!("frames: {}\n", self.frames);
        if let Some(d) = &self.depth {
            out += "\ndepth\n";
            out += &depth_table(&[("source depth", d)]);
        }
        if let Some(s) = &self.segmentation {
            out += "\n2D segmentation\n";
            out += &segmentation_table(&[("labels", s)]);
        }
        let mut rows = Vec::new();
        if let Some(r) = &self.reconstruction {
            rows.push(("full".to_string(), r));
        }
        if let (Some(r), Some(z)) = (&self.reconstruction_cropped, crop_z) {
            rows.push((format!("cropped z <= {z}"), r));
        }
        if !rows.is_empty() {
            out += "\nreconstruction\n";
            let rows: Vec<(&str, &ReconstructionReport)> = rows.iter().map(|(n, r)| (n.as_str(), *r)).collect();
            out += &reconstruction_table(&rows);
        }
        if let Some(s) = &self.semantic_3d {
            out += "\n3D semantics\n";
            out += &segmentation_table(&[("nearest vertex", s)]);
        }
        out
    }
}

/// Wall-clock time of one stage. `frame` is `None` for whole-run stages.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTiming {
    pub frame: Option<u32>,
    pub stage: &'static str,
    pub ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub mesh: SemanticMesh,
    pub reports: PipelineReports,
    pub timings: Vec<StageTiming>,
}

struct Timer<'a> {
    log: &'a mut Vec<StageTiming>,
    frame: Option<u32>,
}

impl Timer<'_> {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.log.push(StageTiming {
            frame: self.frame,
            stage,
            ms,
        });
        out
    }
}

struct ExternalMaps {
    depth: Option<DepthMap>,
    labels: Option<LabelMap>,
    scores: Option<SemanticScores>,
}

fn check_size(what: &'static str, actual: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if actual != expected {
        return Err(Error::invalid(
            what,
            format!("{}x{} does not match the {}x{} camera", actual.0, actual.1, expected.0, expected.1),
        ));
    }
    Ok(())
}

fn load_external(dir: &Path, frame_id: u32, palette: &ClassPalette, size: (usize, usize)) -> Result<ExternalMaps> {
    let depth_path = frame_path(&dir.join("depth"), frame_id, "png");
    let labels_path = frame_path(&dir.join("labels"), frame_id, "png");
    let scores_path = frame_path(&dir.join("scores"), frame_id, "bin");
    let depth = if depth_path.is_file() {
        let d = read_depth_png(&depth_path)?;
        check_size("external depth", d.size(), size)?;
        Some(d)
    } else {
        warn!("frame {frame_id}: no external depth, falling back to raw stereo");
        None
    };
    let labels = if labels_path.is_file() {
        let l = read_labels_png(&labels_path, palette)?;
        check_size("external labels", l.size(), size)?;
        Some(l)
    } else {
        None
    };
    let scores = if scores_path.is_file() {
        let s = read_scores(&scores_path)?;
        check_size("external scores", s.size(), size)?;
        if s.classes() != palette.len() {
            return Err(Error::invalid(
                "external scores",
                format!("{} classes for a {}-class palette", s.classes(), palette.len()),
            ));
        }
        Some(s)
    } else {
        None
    };
    if labels.is_none() && scores.is_none() {
        warn!("frame {frame_id}: no external labels or scores, fusing without semantics");
    }
    Ok(ExternalMaps { depth, labels, scores })
}

fn in_frame(frame_id: u32) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        e @ Error::Frame { .. } => e,
        e => Error::Frame {
            frame_id,
            source: Box::new(e),
        },
    }
}

/// Runs the whole pipeline and writes its outputs.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    run_with(config, |_, _| Ok(()))
}

/// Same as [`run`], calling `on_frame` after each frame is fused.
pub fn run_with<F>(config: &PipelineConfig, mut on_frame: F) -> Result<RunOutput>
where
    F: FnMut(u32, &Reconstructor) -> Result<()>,
{
    config.validate()?;
    let seq = Sequence::open(
        &config.sequence,
        &LoadOptions {
            first_frame: config.first_frame,
            max_frames: config.max_frames,
        },
    )?;
    let palette = seq.palette().cloned().unwrap_or_else(ClassPalette::unlabeled);
    let rig = *seq.rig();
    let size = rig.intrinsics.size();
    let mut recon = Reconstructor::new(config.fusion.clone(), config.filter.clone(), palette.clone(), rig.intrinsics)?;
    let eval = &config.eval;
    let mut depth_acc = DepthErrorAccumulator::new();
    let mut confusion = ConfusionMatrix::new(palette.len(), &eval.ignore_classes);
    let mut seg_frames = 0usize;
    let mut timings = Vec::new();
    let layout = seq.layout().clone();

    for &frame_id in seq.frame_ids() {
        let mut timer = Timer {
            log: &mut timings,
            frame: Some(frame_id),
        };
        let frame = timer.time("load", || seq.load_frame(frame_id)).map_err(in_frame(frame_id))?;
        let external = match (config.refined_source, &config.maps_dir) {
            (RefinedSource::ExternalMaps, Some(dir)) => Some(
                timer
                    .time("external", || load_external(dir, frame_id, &palette, size))
                    .map_err(in_frame(frame_id))?,
            ),
            _ => None,
        };
        let (depth, labels, scores) = match external {
            Some(ExternalMaps {
                depth: Some(d),
                labels,
                scores,
            }) => (d, labels, scores),
            other => {
                let depth = timer
                    .time("stereo", || compute_depth(&frame.left, &frame.right, &rig, &config.stereo))
                    .map_err(in_frame(frame_id))?;
                let (labels, scores) = other.map_or((None, None), |m| (m.labels, m.scores));
                (depth, labels, scores)
            }
        };
        timer
            .time("fuse", || recon.integrate(&depth, labels.as_ref(), scores.as_ref(), &frame.pose))
            .map_err(in_frame(frame_id))?;

        timer
            .time("evaluate", || -> Result<()> {
                let gt_depth = layout.gt_depth(frame_id);
                if eval.depth && gt_depth.is_file() {
                    depth_acc.add(&depth, &read_depth_png(&gt_depth)?)?;
                }
                let gt_labels = layout.gt_labels(frame_id);
                let pred = labels.clone().or_else(|| scores.as_ref().map(SemanticScores::argmax));
                if let (true, Some(pred), true) = (eval.segmentation, pred, gt_labels.is_file()) {
                    confusion.add_maps(&pred, &read_labels_png(&gt_labels, &palette)?)?;
                    seg_frames += 1;
                }
                Ok(())
            })
            .map_err(in_frame(frame_id))?;
        info!("frame {frame_id} fused ({} so far)", recon.frames());
        on_frame(frame_id, &recon).map_err(in_frame(frame_id))?;
    }

    let frames = recon.frames();
    let mut timer = Timer {
        log: &mut timings,
        frame: None,
    };
    let mesh = timer.time("mesh", || recon.finish());
    let mut reports = PipelineReports {
        frames,
        depth: depth_acc.report().ok(),
        segmentation: (seg_frames > 0).then(|| confusion.report()),
        ..PipelineReports::default()
    };
    let gt_points = layout.gt_points();
    if eval.reconstruction && gt_points.is_file() && !mesh.vertices.is_empty() {
        timer.time("evaluate", || -> Result<()> {
            let gt = read_labeled_points(&gt_points)?;
            if gt.is_empty() {
                warn!("{}: no ground-truth points", gt_points.display());
                return Ok(());
            }
            reports.reconstruction = Some(reconstruction_report(&gt.points, &mesh, eval.threshold, eval.quantile)?);
            if let Some(z) = eval.crop_z {
                let cropped = crop_ground_truth(&gt, z);
                if !cropped.is_empty() {
                    reports.reconstruction_cropped =
                        Some(reconstruction_report(&cropped.points, &mesh, eval.threshold, eval.quantile)?);
                }
            }
            reports.semantic_3d = Some(semantic_3d_transfer(&gt, &mesh, palette.len(), &eval.ignore_classes)?);
            Ok(())
        })?;
    }

    write_outputs(config, &mesh, &reports, &timings)?;
    Ok(RunOutput {
        mesh,
        reports,
        timings,
    })
}

fn write_outputs(
    config: &PipelineConfig,
    mesh: &SemanticMesh,
    reports: &PipelineReports,
    timings: &[StageTiming],
) -> Result<()> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    export_mesh(mesh, &out.join("mesh.ply"))?;
    write_json(reports, &out.join("reports.json"))?;
    let text_path = out.join("report.txt");
    fs::write(&text_path, reports.to_text(config.eval.crop_z)).map_err(|e| Error::io(&text_path, e))?;
    let mut csv = String::from("frame,stage,ms\n");
    for t in timings {
        let frame = t.frame.map(|f| f.to_string()).unwrap_or_default();
        writeln!(csv, "{frame},{},{:.3}", t.stage, t.ms).expect("string write");
    }
    let timings_path = out.join("timings.csv");
    fs::write(&timings_path, csv).map_err(|e| Error::io(&timings_path, e))?;
    if let Some(d) = &reports.depth {
        for (name, text) in [
            ("deviation_curve.csv", deviation_curve_csv(d)),
            ("rms_by_distance.csv", rms_by_distance_csv(d)),
        ] {
            let p = out.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}
