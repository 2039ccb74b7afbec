use std::fs;
use std::path::Path;

use semfuse::pipeline::{
    render_synthetic, run, synthetic_rig, PipelineConfig, RefinedSource, SynthOptions, SyntheticScene,
};
use semfuse::scene_io::{frame_path, write_calibration, write_poses, SequenceLayout};
use semfuse::Error;

fn small_sequence(root: &Path, frames: usize) -> SequenceLayout {
    let options = SynthOptions {
        gt_spacing: 0.05,
        ..SynthOptions::default()
    };
    render_synthetic(&SyntheticScene::desk(frames), &synthetic_rig(160, 120).unwrap(), &options, root).unwrap()
}

fn config(seq: &Path, out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::new(seq, out);
    c.stereo.num_disparities = 16;
    c
}

#[test]
fn empty_sequence_gives_empty_mesh_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let layout = SequenceLayout::new(dir.path().join("seq"));
    fs::create_dir_all(layout.left_dir()).unwrap();
    write_calibration(&synthetic_rig(160, 120).unwrap(), &layout.calibration()).unwrap();
    write_poses(&[], &layout.poses()).unwrap();
    let out = dir.path().join("out");
    let result = run(&config(layout.root(), &out)).unwrap();
    assert!(result.mesh.is_empty());
    assert!(result.reports.is_empty());
    assert_eq!(result.reports.frames, 0);
    assert!(out.join("mesh.ply").is_file());
    assert!(out.join("reports.json").is_file());
}

#[test]
fn rerun_is_byte_identical_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let layout = small_sequence(&dir.path().join("seq"), 3);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = run(&config(layout.root(), &a)).unwrap();
    run(&config(layout.root(), &b)).unwrap();
    assert_eq!(fs::read(a.join("mesh.ply")).unwrap(), fs::read(b.join("mesh.ply")).unwrap());

    assert_eq!(first.reports.frames, 3);
    assert!(first.reports.depth.is_some());
    assert!(first.reports.segmentation.is_none());
    assert!(first.reports.reconstruction.is_some());
    assert!(first.reports.semantic_3d.is_some());
    for name in ["report.txt", "timings.csv", "deviation_curve.csv", "rms_by_distance.csv"] {
        assert!(a.join(name).is_file(), "{name} missing");
    }
    let timings = fs::read_to_string(a.join("timings.csv")).unwrap();
    let mut lines = timings.lines();
    assert_eq!(lines.next(), Some("frame,stage,ms"));
    assert!(timings.contains("\n0,stereo,"));
    assert!(timings.contains("\n,mesh,"));
}

#[test]
fn external_maps_fall_back_to_stereo_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let layout = small_sequence(&dir.path().join("seq"), 2);
    let maps = dir.path().join("maps");
    for sub in ["depth", "labels"] {
        fs::create_dir_all(maps.join(sub)).unwrap();
    }
    // frame 0 has refined depth and labels, frame 1 has nothing
    fs::copy(layout.gt_depth(0), frame_path(&maps.join("depth"), 0, "png")).unwrap();
    fs::copy(layout.gt_labels(0), frame_path(&maps.join("labels"), 0, "png")).unwrap();
    let mut c = config(layout.root(), &dir.path().join("out"));
    c.refined_source = RefinedSource::ExternalMaps;
    c.maps_dir = Some(maps);
    let out = run(&c).unwrap();
    assert_eq!(out.reports.frames, 2);
    let stereo_frames: Vec<_> = out
        .timings
        .iter()
        .filter(|t| t.stage == "stereo")
        .map(|t| t.frame)
        .collect();
    assert_eq!(stereo_frames, vec![Some(1)]);
    let seg = out.reports.segmentation.unwrap();
    assert_eq!(seg.overall_acc, 1.0);
}

#[test]
fn mismatched_external_map_is_a_validation_error_for_that_frame() {
    let dir = tempfile::tempdir().unwrap();
    let layout = small_sequence(&dir.path().join("seq"), 1);
    let other = small_sequence_at(&dir.path().join("big"), 80, 60);
    let maps = dir.path().join("maps");
    fs::create_dir_all(maps.join("depth")).unwrap();
    fs::copy(other.gt_depth(0), frame_path(&maps.join("depth"), 0, "png")).unwrap();
    let mut c = config(layout.root(), &dir.path().join("out"));
    c.refined_source = RefinedSource::ExternalMaps;
    c.maps_dir = Some(maps);
    let err = run(&c).unwrap_err();
    assert!(err.is_validation());
    assert!(matches!(err, Error::Frame { frame_id: 0, .. }));
}

fn small_sequence_at(root: &Path, w: u32, h: u32) -> SequenceLayout {
    let options = SynthOptions {
        gt_spacing: 0.1,
        ..SynthOptions::default()
    };
    render_synthetic(&SyntheticScene::desk(1), &synthetic_rig(w, h).unwrap(), &options, root).unwrap()
}

#[test]
fn corrupt_image_reports_its_frame() {
    let dir = tempfile::tempdir().unwrap();
    let layout = small_sequence(&dir.path().join("seq"), 2);
    fs::write(layout.right(1), b"not a png").unwrap();
    let err = run(&config(layout.root(), &dir.path().join("out"))).unwrap_err();
    assert!(matches!(err, Error::Frame { frame_id: 1, .. }), "{err}");
    assert!(err.to_string().contains('1'));
}

#[test]
fn max_frames_and_first_frame_select_a_window() {
    let dir = tempfile::tempdir().unwrap();
    let layout = small_sequence(&dir.path().join("seq"), 4);
    let mut c = config(layout.root(), &dir.path().join("out"));
    c.first_frame = 1;
    c.max_frames = Some(2);
    let out = run(&c).unwrap();
    assert_eq!(out.reports.frames, 2);
    let fused: Vec<_> = out
        .timings
        .iter()
        .filter(|t| t.stage == "fuse")
        .filter_map(|t| t.frame)
        .collect();
    assert_eq!(fused, vec![1, 2]);
}

#[test]
fn config_file_round_trip_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    small_sequence(&dir.path().join("seq"), 1);
    let path = dir.path().join("config.json");
    fs::write(
        &path,
        r#"{"sequence": "seq", "output_dir": "out", "stereo": {"num_disparities": 16}, "eval": {"crop_z": null}}"#,
    )
    .unwrap();
    let c = PipelineConfig::load(&path).unwrap();
    let out = run(&c).unwrap();
    assert!(out.reports.reconstruction_cropped.is_none());
    assert!(dir.path().join("out").join("mesh.ply").is_file());
}
