//! End-to-end checks of the binary: synth writes the input layout, run
//! consumes it and produces the report bundle.

use std::path::Path;
use std::process::Command;

fn scenediff() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenediff"))
}

#[test]
fn synth_then_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = dir.path().join("out");

    let status = scenediff()
        .args(["synth", "--preset", "single-move", "--out-dir"])
        .arg(&scene)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["reference.ply", "rescan.ply", "poses.txt", "gt/gt_changed.ply", "gt/gt_transforms.json"] {
        assert!(scene.join(f).is_file(), "missing {f}");
    }

    let output = scenediff()
        .args(["run", "--reference"])
        .arg(scene.join("reference.ply"))
        .arg("--rescan")
        .arg(scene.join("rescan.ply"))
        .arg("--poses")
        .arg(scene.join("poses.txt"))
        .arg("--gt")
        .arg(scene.join("gt"))
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("hypotheses: 1"), "unexpected summary:\n{stdout}");
    for f in ["report.json", "timings.json", "changed.ply"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(out.join("objects").join("object_0.ply").is_file());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["hypotheses"].as_array().unwrap().len(), 1);
    assert_eq!(report["eval"]["discovered_count"], 1);
}

#[test]
fn unknown_preset_fails_cleanly() {
    let output = scenediff()
        .args(["synth", "--preset", "nonsense", "--out-dir"])
        .arg(std::env::temp_dir().join("scenediff-nonexistent"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown preset"));
    assert!(!Path::new(&std::env::temp_dir().join("scenediff-nonexistent")).exists());
}
