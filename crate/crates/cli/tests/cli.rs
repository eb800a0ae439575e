use std::path::Path;
use std::process::Command;

use thzqi_cli::manifest::{sha256_hex, Manifest};

fn thzqi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thzqi"))
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn list_shows_bundled_scenarios() {
    let out = thzqi().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    for name in ["fig2_reference", "fig3_tape", "fig6_knife_edge", "fov_characterization"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn run_writes_checksummed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = thzqi()
        .args(["run", "--scenario", "fig2_reference", "--qmc-samples", "16384", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m.scenario, "fig2_reference");
    assert_eq!(m.qmc_samples, 16384);
    for name in ["amplitude.csv", "amplitude.pgm", "waveform_r32_c32.csv", "spectrum_r32_c32.csv", "report.json"] {
        let a = m.artifacts.iter().find(|a| a.path == name).unwrap_or_else(|| panic!("missing {name}"));
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(a.sha256, sha256_hex(&bytes));
        assert_eq!(a.bytes, bytes.len() as u64);
    }
    let paths: Vec<_> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
}

#[test]
fn invalid_config_exits_one_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        "{\n  \"name\": \"bad\",\n  // negative wavelength\n  \"config\": {\"optical\": {\n    \"lambda_thz\": -2e-4\n  }},\n  \"scene\": {\"kind\": \"plain_mirror\"},\n  \"outputs\": [{\"kind\": \"metrology\"}]\n}\n",
    )
    .unwrap();
    let out = thzqi().args(["run", "--scenario"]).arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("lambda_thz") && err.contains("line 5"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_scenario_and_bad_flags_exit_one() {
    let out = thzqi().args(["run", "--scenario", "no_such_scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = thzqi().args(["run", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(thzqi().arg("--help").output().unwrap().status.success());
}

#[test]
fn manifests_identical_across_thread_counts() {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = thzqi()
            .args(["run", "--scenario", "fig3_tape", "--noise", "experimental", "--seed", "11"])
            .args(["--qmc-samples", "16384", "--threads", threads, "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join("manifest.json")).unwrap()
    };
    let one = run("1");
    assert_eq!(one, run("4"));
    assert_eq!(one, run("1"));
}

#[test]
fn seed_changes_noisy_output() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = thzqi()
            .args(["run", "--scenario", "fig2_reference", "--noise", "experimental", "--seed", seed])
            .args(["--qmc-samples", "16384", "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
        manifest(dir.path())
    };
    let (a, b) = (run("1"), run("2"));
    let amp = |m: &Manifest| m.artifacts.iter().find(|x| x.path == "amplitude.csv").unwrap().sha256.clone();
    assert_ne!(amp(&a), amp(&b));
    assert_eq!(a.config_sha256.len(), 64);
}

#[test]
fn out_root_places_run_under_scenario_name() {
    let root = tempfile::tempdir().unwrap();
    let out = thzqi()
        .args(["run", "--scenario", "fov_characterization", "--qmc-samples", "8192"])
        .env("THZQI_OUT_ROOT", root.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.path().join("fov_characterization").join("manifest.json").exists());
}
