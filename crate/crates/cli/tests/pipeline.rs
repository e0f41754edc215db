//! Command-level tests: flag handling, error surfacing, report shapes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_fpba")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("fpba-pipeline").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth_scene(dir: &Path, frames: usize, seed: u64) {
    let status = Command::new(binary())
        .args([
            "synth",
            "--out",
            dir.to_str().unwrap(),
            "--frames",
            &frames.to_string(),
            "--seed",
            &seed.to_string(),
        ])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn invalid_walls_strategy_is_usage_error() {
    let scene = workdir("bad-strategy-scene");
    synth_scene(&scene, 4, 3);
    let out = workdir("bad-strategy-out");
    let output = Command::new(binary())
        .args([
            "refine",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--walls-strategy",
            "bogus",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("bogus"), "stderr was: {err}");
}

#[test]
fn metrics_without_reference_reports_absent_nnd() {
    let scene = workdir("metrics-scene");
    synth_scene(&scene, 6, 4);
    let out = workdir("metrics-out");
    let output = Command::new(binary())
        .args([
            "metrics",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--stride",
            "4",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(report.contains("nnd: absent"), "report: {report}");
    // The scene ships a floorplan, so NSD is present.
    assert!(!report.contains("nsd: absent"), "report: {report}");
}

#[test]
fn metrics_without_floorplan_warns_and_skips_nsd() {
    let scene = workdir("nofp-scene");
    synth_scene(&scene, 6, 5);
    std::fs::remove_file(scene.join("floorplan.txt")).unwrap();
    let out = workdir("nofp-out");
    let output = Command::new(binary())
        .args([
            "metrics",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--stride",
            "4",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(report.contains("nsd: absent"));
    assert!(report.contains("warning: nsd skipped"));
}

#[test]
fn align_on_walls_free_scan_fails_with_stage_error() {
    // A scene whose every frame looks straight down at the floor: the
    // boundary stage has nothing left after floor removal.
    use fpba_core::geometry::{CameraIntrinsics, Pose};
    use fpba_core::io::{
        write_depth_grid, write_label_grid, write_manifest, write_trajectory, Grid, SceneManifest,
    };
    use nalgebra::{UnitQuaternion, Vector3};

    let scene = workdir("floor-only-scene");
    std::fs::create_dir_all(scene.join("depth")).unwrap();
    std::fs::create_dir_all(scene.join("labels")).unwrap();
    let intr = CameraIntrinsics::new(40.0, 40.0, 32.0, 24.0, 0.001).unwrap();
    let mut manifest_frames = Vec::new();
    let mut traj = Vec::new();
    for i in 0..3usize {
        let depth = Grid::<u16>::from_data(64, 48, vec![1500; 64 * 48]).unwrap();
        let labels = Grid::<u8>::from_data(64, 48, vec![1; 64 * 48]).unwrap();
        let dp = format!("depth/{i:06}.d16");
        let lp = format!("labels/{i:06}.l8");
        write_depth_grid(&depth, scene.join(&dp)).unwrap();
        write_label_grid(&labels, scene.join(&lp)).unwrap();
        manifest_frames.push((i, dp.into(), lp.into()));
        // Looking straight down from 1.5 m.
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
        traj.push((i, Pose::new(rot, Vector3::new(i as f64 * 0.3, 1.5, 0.0))));
    }
    write_manifest(
        &SceneManifest {
            intrinsics: intr,
            frames: manifest_frames,
        },
        scene.join("manifest.txt"),
    )
    .unwrap();
    write_trajectory(&traj, scene.join("trajectory.txt")).unwrap();
    fpba_core::io::write_floorplan(
        &fpba_core::synth::three_room_plan(),
        scene.join("floorplan.txt"),
    )
    .unwrap();

    let out = workdir("floor-only-out");
    let output = Command::new(binary())
        .args([
            "align",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--stride",
            "2",
        ])
        .output()
        .unwrap();
    assert!(!output.status.success(), "align should fail");
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(
        err.contains("boundary") || err.contains("alignment") || err.contains("gravity"),
        "stderr was: {err}"
    );
}

#[test]
fn show_config_prints_defaults() {
    let output = Command::new(binary())
        .args(["--show-config", "metrics"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    for key in [
        "lambda_floor: 10",
        "lambda_walls: 0.6",
        "walls_strategy: fnw",
        "lr: 0.001",
        "lr_switch_step: 20000",
        "momentum: 0.9",
        "stride: 4",
        "radius: 0.1",
        "density: 500",
    ] {
        assert!(text.contains(key), "missing '{key}' in:\n{text}");
    }
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = workdir("config-file");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "lambda_floor = 3.5\nstride = 7\nseed = 99\n").unwrap();
    let output = Command::new(binary())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--show-config",
            "metrics",
            "--stride",
            "2",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{:?}", output);
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("lambda_floor: 3.5"), "{text}");
    assert!(text.contains("stride: 2"), "flag should win: {text}");
    assert!(text.contains("seed: 99"), "{text}");
}
