//! End-to-end runs of the `arbor` binary.

use std::path::Path;
use std::process::{Command, Output};

fn arbor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arbor"))
        .args(args)
        .output()
        .expect("arbor runs")
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: &str = "sim.trajectory.goal=12.0";

#[test]
fn all_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = arbor(&["all", "--set", SHORT, "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = text(&out);
    assert!(stdout.contains("width MAPE"));
    assert!(stdout.contains("mean latency"));
    for f in ["scans.csv", "poses.csv", "true_poses.csv", "ground_truth.csv", "frames/index.csv"] {
        assert!(dir.path().join("logs").join(f).exists(), "missing log {f}");
    }
    for f in ["report.csv", "report.txt", "field_map.csv", "landmarks.csv", "timing.csv"] {
        assert!(dir.path().join(f).exists(), "missing output {f}");
    }
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(!report.contains("latency"));

    let out = arbor(&["eval", "--field-map", path(&dir.path().join("field_map.csv"))]);
    assert!(out.status.success());
    assert!(text(&out).contains("front"));
}

#[test]
fn binary_logs_replay() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let fmt = "logs.scan_format=binary";
    let name = "logs.scans=scans.bin";
    let out = arbor(&["simulate", "--set", SHORT, "--set", fmt, "--set", name, "--out", path(&logs)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(logs.join("scans.bin").exists());
    let out = arbor(&["run", "--set", fmt, "--set", name, "--logs", path(&logs), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 7);
}

fn write_minimal_logs(dir: &Path, scans: &str) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("scans.csv"), scans).unwrap();
    std::fs::write(
        dir.join("poses.csv"),
        "timestamp,x,y,theta,v_x,omega,degraded_flag\n0.0,0.0,0.0,0.0,0.5,0.0,0\n0.1,0.05,0.0,0.0,0.5,0.0,0\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("ground_truth.csv"),
        "tree_id,utm_x,utm_y,gt_width,gt_height,est_width,est_height,est_ndvi,match_count,last_update\n\
         0,5.0,2.5,2.7,2.6,0.0,0.0,,0,\n",
    )
    .unwrap();
}

#[test]
fn empty_scan_log_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    write_minimal_logs(&logs, "timestamp,x,y,z,ring_id\n");
    let out = arbor(&["run", "--logs", path(&logs), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    write_minimal_logs(&logs, "timestamp,x,y,z,ring_id\n0.1,3,0,1,5\n0.0,3,0,1,5\n");
    let out = arbor(&["run", "--logs", path(&logs), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not increase"));

    let out = arbor(&["run", "--logs", path(&dir.path().join("nowhere")), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    let out = arbor(&["run", "--set", "association.no_such_key=1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    let out = arbor(&["eval", "--field-map", path(&logs.join("scans.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("survey.toml");
    std::fs::write(&config, "seed = 4\n[sim.trajectory]\ngoal = 9.0\n").unwrap();
    let out = arbor(&["run", "--config", path(&config), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(&config, "seed = \"four\"\n").unwrap();
    let out = arbor(&["run", "--config", path(&config), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}
