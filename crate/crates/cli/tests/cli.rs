use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sparself::io::read_stack;

const POSES: &str = "timestamp,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz\n\
                     0,1,0,0,0,0,1,0,0,0,0,1,0\n\
                     1,1,0,0,0.005,0,1,0,0,0,0,1,0\n";

fn sparself(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparself")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn render(root: &Path) -> std::path::PathBuf {
    fs::write(root.join("scene.json"), r#"{"planes":[{"depth":0.6,"half_extent":[0.6,0.45]}]}"#).unwrap();
    fs::write(root.join("poses.csv"), POSES).unwrap();
    let ds = root.join("ds");
    let out = sparself(&[
        "render",
        "--scene",
        s(&root.join("scene.json")),
        "--poses",
        s(&root.join("poses.csv")),
        "--output-dir",
        s(&ds),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ds
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

#[test]
fn volumetric_encoding_of_17_views_has_17_channels() {
    let dir = tempfile::tempdir().unwrap();
    let ds = render(dir.path());
    let enc = dir.path().join("enc");
    let out = sparself(&["encode", "--dataset", s(&ds), "--encoding", "volumetric", "--frame", "0", "--output-dir", s(&enc)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stack = read_stack(&enc.join("frame_0000.volumetric.stack")).unwrap();
    assert_eq!((stack.channels(), stack.height(), stack.width()), (17, 160, 224));
    assert!(enc.join("frame_0000.volumetric.ch16.png").exists());
}

#[test]
fn epi_encoding_writes_tilings_and_reusable_weights() {
    let dir = tempfile::tempdir().unwrap();
    let ds = render(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = sparself(&["encode", "--dataset", s(&ds), "--encoding", "epi", "--frame", "1", "--seed", "3", "--output-dir", s(&a)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stack = read_stack(&a.join("frame_0001.epi.stack")).unwrap();
    assert_eq!(stack.channels(), 16);
    assert!(a.join("frame_0001.epi_tall.png").exists());
    let w = a.join("epi_weights.bin");
    let out = sparself(&["encode", "--dataset", s(&ds), "--encoding", "epi", "--frame", "1", "--weights", s(&w), "--output-dir", s(&b)]);
    assert!(out.status.success());
    assert_eq!(read_stack(&b.join("frame_0001.epi.stack")).unwrap(), stack);
}

#[test]
fn rpe_of_a_pose_file_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.csv");
    fs::write(&p, "timestamp,r00,r01,r02,tx,r10,r11,r12,ty,r20,r21,r22,tz\n0,1,0,0,0,0,1,0,0,0,0,1,0\n1,0,-1,0,0.3,1,0,0,0.1,0,0,1,0\n2,1,0,0,1,0,1,0,0,0,0,1,0\n").unwrap();
    let out = sparself(&["eval-rpe", "--estimated", s(&p), "--reference", s(&p), "--output-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("rpe.csv")).unwrap();
    assert_eq!(csv, "pair,translation_error_m,rotation_error_deg\n0,0,0\n1,0,0\n");
}

#[test]
fn estimate_then_eval_on_a_dolly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = render(dir.path());
    let est = dir.path().join("est");
    let out = sparself(&["estimate", "--dataset", s(&ds), "--mode", "multi", "--output-dir", s(&est)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["poses.csv", "loss_traces.csv", "inverse_depth_0001.pfm", "estimate_summary.json"] {
        assert!(est.join(f).exists(), "{f}");
    }
    let ev = dir.path().join("ev");
    let out = sparself(&["eval-rpe", "--estimated", s(&est.join("poses.csv")), "--reference", s(&ds.join("gt_poses.csv")), "--output-dir", s(&ev)]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(ev.join("rpe_summary.json")).unwrap()).unwrap();
    let t = summary["aggregate"]["joint_translation"]["rmse"].as_f64().unwrap();
    assert!(t < 5e-4, "translation RMSE {t}");

    let out = sparself(&["eval-depth", "--dataset", s(&ds), "--estimate", s(&est), "--output-dir", s(&ev)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(ev.join("depth.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let mean: f64 = row[2].parse().unwrap();
    assert!((mean - 0.6).abs() < 0.03, "{csv}");
}

#[test]
fn errors_are_json_and_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("never");
    let err = error_json(&sparself(&["estimate", "--dataset", s(&dir.path().join("missing")), "--output-dir", s(&out_dir)]));
    assert_eq!(err["error"], "MissingFile");
    assert!(!out_dir.exists());

    let ds = render(dir.path());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(ds.join("manifest.json")).unwrap()).unwrap();
    let victim = ds.join(manifest["frames"][1]["views"][5]["path"].as_str().unwrap());
    fs::remove_file(&victim).unwrap();
    let err = error_json(&sparself(&["encode", "--dataset", s(&ds), "--encoding", "focalstack-5", "--output-dir", s(&out_dir)]));
    assert_eq!(err["error"], "MissingFile");
    assert_eq!(err["path"], s(&victim));
    assert!(!out_dir.exists());

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"pyramid_levels": 4, "bogus": 1}"#).unwrap();
    let err = error_json(&sparself(&["estimate", "--dataset", s(&ds), "--config", s(&cfg), "--output-dir", s(&out_dir)]));
    assert_eq!(err["error"], "ConfigError");
    assert!(!out_dir.exists());
}

#[test]
fn grad_check_reports_each_scene() {
    let out = sparself(&["grad-check", "--scenes", "1", "--pixels", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| l["failed"] == 0));
}
