//! End-to-end runs of the `fcm-frame` binary: exit codes, artifacts,
//! determinism and the matrix cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jobs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/jobs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcm-frame"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// File name → bytes, without the run-dependent run_info.json.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "run_info.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn tube_pipeline(out: &Path, cache: &Path, threads: &str) {
    let job = jobs().join("tube_segment.toml");
    for cmd in ["condense", "solve-global", "local-stress"] {
        let o = run(&[cmd, "--job", path(&job), "--out", path(out), "--cache", path(cache), "--threads", threads]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn frame_job_writes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["solve-global", "--job", path(&jobs().join("portal_frame.toml")), "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "displacements.csv",
        "reactions.csv",
        "internal_actions.csv",
        "frame.vtk",
        "summary.json",
        "global_solution.json",
        "manifest.json",
        "run_info.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("displacements.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let record = &manifest["commands"]["solve-global"];
    assert!(record["inputs"]["job"].is_string());
    assert!(record["outputs"]["displacements.csv"].is_string());
}

#[test]
fn pipeline_is_deterministic_and_cached() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cache = tmp.path().join("cache");
    tube_pipeline(&a, &cache, "1");
    let info: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_info.json")).unwrap()).unwrap();
    assert!(info["timings"].is_array());

    // second run: other output directory, other thread count, cached matrix
    tube_pipeline(&b, &cache, "2");
    let first = artifacts(&a);
    let second = artifacts(&b);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        assert!(bytes == &second[name], "{name} differs between runs");
    }
    for f in ["segment.kmat", "segment.local.json", "segment.local.vtk", "global_solution.json", "manifest.json"] {
        assert!(first.contains_key(f), "missing {f}");
    }

    let o = run(&[
        "solve-global",
        "--job",
        path(&jobs().join("tube_segment.toml")),
        "--out",
        path(&b),
        "--cache",
        path(&cache),
    ]);
    assert_eq!(code(&o), 0);
    let info: serde_json::Value = serde_json::from_slice(&fs::read(b.join("run_info.json")).unwrap()).unwrap();
    assert_eq!(info["cache_hits"]["segment"], serde_json::Value::Bool(true), "{info}");
}

#[test]
fn local_stress_needs_a_global_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["local-stress", "--job", path(&jobs().join("tube_segment.toml")), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solve-global"));
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = run(&["solve-global", "--job", path(&missing), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);

    let bad = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/invalid/unknown_section.toml");
    let o = run(&["solve-global", "--job", path(&bad), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("elements[0].section"));

    let o = run(&["solve-global", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verification_failure_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let job = jobs().join("cantilever_overrides.toml");
    let o = run(&["verify-cantilever", "--job", path(&job), "--out", path(tmp.path()), "--threshold", "0"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("cantilever_error_profile.csv").is_file());
    assert!(tmp.path().join("cantilever_report.json").is_file());

    let o = run(&["verify-cantilever", "--job", path(&job), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
