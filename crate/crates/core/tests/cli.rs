use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lorentz-embed"))
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn embed_flat_minkowski() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["embed", "minkowski", "--h", "0.1", "--N", "2", "--t-range", "-2,2", "--x-range", "-2,2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "embed.json");
    assert!(r["report"]["pullback"]["rms_relative"].as_f64().unwrap() <= 1e-6);
    assert_eq!(r["config"]["params"]["dim"], 2);
    assert!(dir.path().join("embed_map.csv").exists());
}

#[test]
fn example_ex_distance_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["distance", "example-ex.spacetime", "--from", "-2,1", "--to", "2,1", "--refine", "3"])
        .env("LORENTZ_EMBED_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("DIVERGENT"));
    let r = report(dir.path(), "distance.json");
    assert_eq!(r["report"]["verdict"], "DIVERGENT");
    assert_eq!(r["report"]["schedule"]["floor_coordinate"], 1);
}

#[test]
fn broken_spec_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/broken.spacetime");
    let out = bin().args(["parse", path]).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.spacetime:4:13"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().args(["distance", "minkowski", "--from", "0,0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["parse", "no-such-spec"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn certification_failure_exits_two() {
    // dx is spacelike, so x is not a temporal function
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["rescale", "minkowski", "--tau", "x"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn identical_runs_give_identical_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let status = bin()
            .args(["causality", "sin-lapse", "--point", "-1,0", "--point", "0.5,0.3", "--seed", "7"])
            .env("LORENTZ_EMBED_OUT", "shared")
            .current_dir(d.path())
            .status()
            .unwrap();
        assert!(status.success());
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("shared/causality.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let r: Value = serde_json::from_slice(&read(&a)).unwrap();
    assert_eq!(r["config"]["seed"], 7);
    assert_eq!(r["config"]["version"], env!("CARGO_PKG_VERSION"));
    assert!(r["report"]["points"][0]["point"]["distance"].as_f64().unwrap() < 1e-12);
}

#[test]
fn snapped_points_report_distance() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["causality", "minkowski", "--point", "0.03,0.01"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let r = report(dir.path(), "causality.json");
    let d = r["report"]["points"][0]["point"]["distance"].as_f64().unwrap();
    assert!((d - (0.03f64.powi(2) + 0.01f64.powi(2)).sqrt()).abs() < 1e-12);
}

#[test]
fn clarke_probe_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["clarke", "fig1", "--probe"]).arg("--out").arg(dir.path()).status().unwrap();
    assert!(status.success());
    let r = report(dir.path(), "clarke_probe.json");
    assert_eq!(r["report"]["c2_failure"], true);
    assert_eq!(r["report"]["continuous"], true);
    let status = bin()
        .args(["clarke", "minkowski", "--t-range", "-0.5,1.5", "--exclude-y", "0"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let r = report(dir.path(), "clarke.json");
    assert_eq!(r["report"]["inequality"]["discordant"].as_array().unwrap().len(), 0);
}
