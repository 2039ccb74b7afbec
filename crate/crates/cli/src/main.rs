use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use semfuse::filtering::{apply_filters, FilterParams};
use semfuse::fusion::{export_mesh, import_mesh, FusionParams};
use semfuse::metrics::report::{
    depth_table, deviation_curve_csv, reconstruction_table, rms_by_distance_csv, segmentation_table,
};
use semfuse::metrics::{
    crop_ground_truth, read_labeled_points, reconstruction_report, semantic_3d_transfer, ConfusionMatrix,
    DepthErrorAccumulator, ReconstructionReport,
};
use semfuse::pipeline::{
    render_synthetic, run_with, synthetic_rig, PipelineConfig, Reconstructor, SynthOptions, SyntheticScene,
};
use semfuse::scene_io::{
    frame_path, list_frame_ids, read_calibration, read_depth_png, read_labels_png, read_palette, read_rgb,
    write_depth_png, ClassPalette, LoadOptions, Sequence,
};
use semfuse::stereo::{compute_depth, SgbmParams};

#[derive(Parser)]
#[command(name = "semfuse", version, about = "Incremental semantic 3D reconstruction from posed stereo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline over a sequence, driven by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Depth map from one rectified stereo pair.
    Stereo {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num_disp: Option<u32>,
        /// Matching window radius.
        #[arg(long)]
        window: Option<u32>,
        #[arg(long)]
        p1: Option<u32>,
        #[arg(long)]
        p2: Option<u32>,
    },
    /// Sky removal, gradient and erosion filtering of one depth map.
    Filter {
        #[arg(long)]
        depth: PathBuf,
        /// Label PNG used for sky removal.
        #[arg(long, requires = "palette")]
        labels: Option<PathBuf>,
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        grad_threshold: f64,
        #[arg(long, default_value_t = 0)]
        erosion: u32,
        #[arg(long, default_value_t = 0.5)]
        clip_min: f64,
        #[arg(long, default_value_t = 10.0)]
        clip_max: f64,
        /// Skip the gradient filter.
        #[arg(long)]
        no_gradient: bool,
    },
    /// Fuses precomputed depth (and optional labels) of a sequence into a mesh.
    Fuse {
        #[arg(long)]
        sequence: PathBuf,
        /// Fusion parameters JSON; defaults when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Depth PNGs named `%06d.png`; defaults to `<sequence>/depth`.
        #[arg(long)]
        depth_dir: Option<PathBuf>,
        #[arg(long)]
        labels_dir: Option<PathBuf>,
    },
    /// Depth errors of predicted against ground-truth depth (files or directories).
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Directory for the deviation and RMS-by-distance CSVs.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// 2D segmentation scores (files or directories).
    EvalSeg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        palette: PathBuf,
        /// Ground-truth classes left out, comma separated.
        #[arg(long, value_delimiter = ',')]
        ignore: Vec<u8>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Mesh against labelled ground-truth points.
    #[command(name = "eval-3d")]
    Eval3d {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        crop_z: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 0.9)]
        quantile: f64,
        /// Class count for the label transfer scores; inferred from the labels otherwise.
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ignore: Vec<u8>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Renders a synthetic sequence with ground truth and a matching config.json.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SceneKind::Desk)]
        scene: SceneKind,
        /// Number of views (desk only; the sphere always has 12).
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 320)]
        width: u32,
        #[arg(long, default_value_t = 240)]
        height: u32,
        /// Image noise standard deviation, grey levels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep ground-truth points seen at most this deep.
        #[arg(long)]
        gt_max_depth: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Desk,
    Sphere,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<semfuse::Error> for Failure {
    fn from(e: semfuse::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

type Outcome = Result<(), Failure>;

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            match failure {
                Failure::Validation(_) => ExitCode::from(2),
                Failure::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Run { config } => cmd_run(&config),
        Command::Stereo {
            left,
            right,
            calib,
            out,
            num_disp,
            window,
            p1,
            p2,
        } => {
            let mut params = window.map_or_else(SgbmParams::default, SgbmParams::with_radius);
            if let Some(n) = num_disp {
                params.num_disparities = n;
            }
            if let Some(v) = p1 {
                params.p1 = v;
            }
            if let Some(v) = p2 {
                params.p2 = v;
            }
            params.validate()?;
            let rig = read_calibration(&calib)?;
            let depth = compute_depth(&read_rgb(&left)?, &read_rgb(&right)?, &rig, &params)?;
            write_depth_png(&depth, &out)?;
            info!("{} valid depth pixels", depth.valid_count());
            Ok(())
        }
        Command::Filter {
            depth,
            labels,
            palette,
            out,
            grad_threshold,
            erosion,
            clip_min,
            clip_max,
            no_gradient,
        } => {
            let params = FilterParams {
                gradient_threshold: grad_threshold,
                erosion_radius: erosion,
                clip_min,
                clip_max,
                remove_sky: true,
                gradient: !no_gradient,
            };
            params.validate()?;
            let palette = palette.as_deref().map(read_palette).transpose()?.unwrap_or_else(ClassPalette::unlabeled);
            let labels = labels.as_deref().map(|p| read_labels_png(p, &palette)).transpose()?;
            let filtered = apply_filters(&read_depth_png(&depth)?, labels.as_ref(), &palette, &params)?;
            write_depth_png(&filtered, &out)?;
            Ok(())
        }
        Command::Fuse {
            sequence,
            params,
            out,
            depth_dir,
            labels_dir,
        } => cmd_fuse(&sequence, params.as_deref(), &out, depth_dir, labels_dir),
        Command::EvalDepth { pred, gt, json, curves } => {
            let mut acc = DepthErrorAccumulator::new();
            for (p, g) in pairs(&pred, &gt)? {
                acc.add(&read_depth_png(&p)?, &read_depth_png(&g)?)?;
            }
            let report = acc.report()?;
            print!("{}", depth_table(&[("depth", &report)]));
            if let Some(path) = json {
                write_json(&report, &path)?;
            }
            if let Some(dir) = curves {
                write_file(&dir.join("deviation_curve.csv"), &deviation_curve_csv(&report))?;
                write_file(&dir.join("rms_by_distance.csv"), &rms_by_distance_csv(&report))?;
            }
            Ok(())
        }
        Command::EvalSeg {
            pred,
            gt,
            palette,
            ignore,
            json,
        } => {
            let palette = read_palette(&palette)?;
            let mut m = ConfusionMatrix::new(palette.len(), &ignore);
            for (p, g) in pairs(&pred, &gt)? {
                m.add_maps(&read_labels_png(&p, &palette)?, &read_labels_png(&g, &palette)?)?;
            }
            let report = m.report();
            print!("{}", segmentation_table(&[("labels", &report)]));
            if let Some(path) = json {
                write_json(&report, &path)?;
            }
            Ok(())
        }
        Command::Eval3d {
            gt,
            mesh,
            crop_z,
            threshold,
            quantile,
            palette,
            ignore,
            json,
        } => cmd_eval_3d(&gt, &mesh, crop_z, threshold, quantile, palette.as_deref(), &ignore, json.as_deref()),
        Command::Synth {
            out,
            scene,
            frames,
            width,
            height,
            noise,
            seed,
            gt_max_depth,
        } => {
            if frames == 0 {
                return Err(Failure::Validation("--frames must be at least 1".into()));
            }
            let scene = match scene {
                SceneKind::Desk => SyntheticScene::desk(frames),
                SceneKind::Sphere => SyntheticScene::sphere_views(0.5, 2.0),
            };
            let options = SynthOptions {
                noise_sigma: noise,
                seed,
                gt_max_depth: gt_max_depth.unwrap_or(f64::INFINITY),
                ..SynthOptions::default()
            };
            render_synthetic(&scene, &synthetic_rig(width, height)?, &options, &out)?;
            write_json(&PipelineConfig::new(".", "output"), &out.join("config.json"))?;
            println!("wrote {} frames to {}", scene.trajectory.len(), out.display());
            Ok(())
        }
    }
}

fn cmd_run(config: &Path) -> Outcome {
    let config = PipelineConfig::load(config)?;
    let result = run_with(&config, |id, recon| {
        info!("frame {id}: {} frames fused", recon.frames());
        Ok(())
    })?;
    print!("{}", result.reports.to_text(config.eval.crop_z));
    println!(
        "mesh: {} vertices, {} triangles, written to {}",
        result.mesh.vertices.len(),
        result.mesh.triangles.len(),
        config.output_dir.join("mesh.ply").display()
    );
    Ok(())
}

/// Pairs a prediction with its ground truth: two files, or every
/// `%06d.png` in the prediction directory that also exists in the
/// ground-truth directory.
fn pairs(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>, Failure> {
    match (pred.is_dir(), gt.is_dir()) {
        (false, false) => Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]),
        (true, true) => {
            let out: Vec<_> = list_frame_ids(pred)?
                .into_iter()
                .map(|id| (frame_path(pred, id, "png"), frame_path(gt, id, "png")))
                .filter(|(_, g)| g.is_file())
                .collect();
            if out.is_empty() {
                return Err(Failure::Validation(format!(
                    "no frame in {} has ground truth in {}",
                    pred.display(),
                    gt.display()
                )));
            }
            Ok(out)
        }
        _ => Err(Failure::Validation("--pred and --gt must both be files or both directories".into())),
    }
}

fn cmd_fuse(
    sequence: &Path,
    params: Option<&Path>,
    out: &Path,
    depth_dir: Option<PathBuf>,
    labels_dir: Option<PathBuf>,
) -> Outcome {
    let fusion: FusionParams = match params {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        None => FusionParams::default(),
    };
    fusion.validate()?;
    let seq = Sequence::open(sequence, &LoadOptions::default())?;
    let depth_dir = depth_dir.unwrap_or_else(|| sequence.join("depth"));
    if !depth_dir.is_dir() {
        return Err(Failure::Validation(format!("depth directory {} does not exist", depth_dir.display())));
    }
    let palette = seq.palette().cloned().unwrap_or_else(ClassPalette::unlabeled);
    let passthrough = FilterParams {
        gradient: false,
        remove_sky: false,
        erosion_radius: 0,
        ..FilterParams::default()
    };
    let mut recon = Reconstructor::new(fusion, passthrough, palette.clone(), seq.rig().intrinsics)?;
    for &id in seq.frame_ids() {
        let depth_path = frame_path(&depth_dir, id, "png");
        if !depth_path.is_file() {
            warn!("frame {id}: no depth at {}, skipped", depth_path.display());
            continue;
        }
        let depth = read_depth_png(&depth_path)?;
        let labels = match &labels_dir {
            Some(dir) => {
                let p = frame_path(dir, id, "png");
                p.is_file().then(|| read_labels_png(&p, &palette)).transpose()?
            }
            None => None,
        };
        let pose = seq.pose(id).expect("listed frames have poses");
        recon
            .integrate(&depth, labels.as_ref(), None, pose)
            .map_err(|e| semfuse::Error::Frame {
                frame_id: id,
                source: Box::new(e),
            })?;
    }
    let frames = recon.frames();
    let mesh = recon.finish();
    export_mesh(&mesh, out)?;
    println!(
        "fused {frames} frames: {} vertices, {} triangles",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct Eval3dReport {
    full: ReconstructionReport,
    cropped: Option<ReconstructionReport>,
    semantic_3d: semfuse::metrics::SegmentationReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval_3d(
    gt: &Path,
    mesh: &Path,
    crop_z: Option<f64>,
    threshold: f64,
    quantile: f64,
    palette: Option<&Path>,
    ignore: &[u8],
    json: Option<&Path>,
) -> Outcome {
    if !(threshold > 0.0) || !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Failure::Validation("need --threshold > 0 and --quantile in (0, 1]".into()));
    }
    let gt = read_labeled_points(gt)?;
    let mesh = import_mesh(mesh)?;
    let full = reconstruction_report(&gt.points, &mesh, threshold, quantile)?;
    let cropped = match crop_z {
        Some(z) => {
            let c = crop_ground_truth(&gt, z);
            if c.is_empty() {
                warn!("no ground-truth points at or below z = {z}");
                None
            } else {
                Some(reconstruction_report(&c.points, &mesh, threshold, quantile)?)
            }
        }
        None => None,
    };
    let classes = match palette {
        Some(p) => read_palette(p)?.len(),
        None => gt.labels.iter().chain(&mesh.vertex_labels).max().map_or(1, |&m| m as usize + 1),
    };
    let semantic_3d = semantic_3d_transfer(&gt, &mesh, classes, ignore)?;
    let mut rows = vec![("full".to_string(), &full)];
    if let (Some(z), Some(c)) = (crop_z, &cropped) {
        rows.push((format!("cropped z <= {z}"), c));
    }
    let rows: Vec<(&str, &ReconstructionReport)> = rows.iter().map(|(n, r)| (n.as_str(), *r)).collect();
    print!("{}", reconstruction_table(&rows));
    println!();
    print!("{}", segmentation_table(&[("nearest vertex", &semantic_3d)]));
    if let Some(path) = json {
        write_json(
            &Eval3dReport {
                full,
                cropped,
                semantic_3d,
            },
            path,
        )?;
    }
    Ok(())
}
