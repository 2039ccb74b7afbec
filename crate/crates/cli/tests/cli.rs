use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn semfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, frames: &str) {
    let out = semfuse(&["synth", "--out", s(root), "--frames", frames, "--width", "160", "--height", "120"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn small_config(seq: &Path) {
    let path = seq.join("config.json");
    let mut config: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    config["stereo"]["num_disparities"] = 16.into();
    fs::write(&path, config.to_string()).unwrap();
}

#[test]
fn synth_then_run_writes_mesh_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    synth(&seq, "3");
    small_config(&seq);
    let out = semfuse(&["run", "--config", s(&seq.join("config.json"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reconstruction"), "{stdout}");
    for name in ["mesh.ply", "reports.json", "report.txt", "timings.csv"] {
        assert!(seq.join("output").join(name).is_file(), "{name}");
    }
}

#[test]
fn stereo_filter_fuse_and_evaluate_single_steps() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    synth(&seq, "2");
    let depth_dir = dir.path().join("depth");
    fs::create_dir_all(&depth_dir).unwrap();
    for id in ["000000", "000001"] {
        let raw = depth_dir.join(format!("{id}.png"));
        let out = semfuse(&[
            "stereo",
            "--left",
            s(&seq.join("left").join(format!("{id}.png"))),
            "--right",
            s(&seq.join("right").join(format!("{id}.png"))),
            "--calib",
            s(&seq.join("calib.json")),
            "--out",
            s(&raw),
            "--num-disp",
            "16",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = semfuse(&[
            "filter",
            "--depth",
            s(&raw),
            "--labels",
            s(&seq.join("gt_labels").join(format!("{id}.png"))),
            "--palette",
            s(&seq.join("palette.json")),
            "--out",
            s(&raw),
            "--erosion",
            "1",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    let out = semfuse(&["eval-depth", "--pred", s(&depth_dir), "--gt", s(&seq.join("gt_depth")), "--curves", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("RMS"));
    assert!(dir.path().join("deviation_curve.csv").is_file());

    let params = dir.path().join("fusion.json");
    fs::write(&params, r#"{"min_weight": 1.0}"#).unwrap();
    let mesh = dir.path().join("mesh.ply");
    let out = semfuse(&[
        "fuse",
        "--sequence",
        s(&seq),
        "--params",
        s(&params),
        "--out",
        s(&mesh),
        "--depth-dir",
        s(&seq.join("gt_depth")),
        "--labels-dir",
        s(&seq.join("gt_labels")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let json = dir.path().join("eval.json");
    let out = semfuse(&[
        "eval-3d",
        "--gt",
        s(&seq.join("gt_points.ply")),
        "--mesh",
        s(&mesh),
        "--crop-z",
        "1.0",
        "--palette",
        s(&seq.join("palette.json")),
        "--json",
        s(&json),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert!(report["full"]["recon_to_gt"]["accuracy_pct"].as_f64().unwrap() > 90.0);
    assert!(report["semantic_3d"]["overall_acc"].as_f64().unwrap() > 0.9);

    let out = semfuse(&[
        "eval-seg",
        "--pred",
        s(&seq.join("gt_labels")),
        "--gt",
        s(&seq.join("gt_labels")),
        "--palette",
        s(&seq.join("palette.json")),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1.0000"));
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    synth(&seq, "1");
    let config = seq.join("bad.json");
    fs::write(&config, r#"{"sequence": ".", "output_dir": "o", "fusion": {"voxel_size": 0}}"#).unwrap();
    assert_eq!(semfuse(&["run", "--config", s(&config)]).status.code(), Some(2));

    fs::write(&config, r#"{"sequence": "missing", "output_dir": "o"}"#).unwrap();
    assert_eq!(semfuse(&["run", "--config", s(&config)]).status.code(), Some(2));

    fs::write(&config, r#"{"sequence": ".", "output_dir": "o", "voxels": 3}"#).unwrap();
    assert_eq!(semfuse(&["run", "--config", s(&config)]).status.code(), Some(2));

    let depth = seq.join("gt_depth").join("000000.png");
    let labels = seq.join("gt_labels").join("000000.png");
    let out = semfuse(&["filter", "--depth", s(&depth), "--labels", s(&labels), "--out", s(&dir.path().join("f.png"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = semfuse(&[
        "filter",
        "--depth",
        s(&depth),
        "--out",
        s(&dir.path().join("f.png")),
        "--clip-min",
        "5",
        "--clip-max",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clip"));
}

#[test]
fn runtime_failures_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    synth(&seq, "1");
    fs::write(seq.join("left").join("000000.png"), b"garbage").unwrap();
    let out = semfuse(&["run", "--config", s(&seq.join("config.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame 0"));

    let missing = dir.path().join("nope.png");
    let out = semfuse(&["filter", "--depth", s(&missing), "--out", s(&dir.path().join("o.png"))]);
    assert_eq!(out.status.code(), Some(1));
}
