//! End-to-end runs of the binary: exit codes, outputs and manifests.

use std::path::Path;
use std::process::Command;

use regnoise_lab::io::{read_csv, sha256_hex, FlatArray};
use regnoise_lab::run::read_manifest;

fn lab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regnoise-lab"));
    c.env_remove("REGNOISE_SEED");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_PEANO: &str = r#"{"experiment": "peano", "seed": 5, "seeds": 8, "resolution": {"n_time": 1024}}"#;

#[test]
fn list_names_every_experiment() {
    let out = lab().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fbm-check", "gain", "ito-tanaka", "yde", "flow", "peano", "transport", "continuity", "fracalc-check"]
    {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", SMALL_PEANO);
    assert_eq!(lab().args(["validate", "--config"]).arg(&good).status().unwrap().code(), Some(0));
    let bad = write(dir.path(), "bad.json", r#"{"experiment": "peano", "params": {"hurst": 1.5}}"#);
    let out = lab().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.hurst"));
    let unknown = write(dir.path(), "unknown.json", r#"{"experiment": "peano", "bogus": 1}"#);
    let out = lab().args(["validate", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let missing = dir.path().join("missing.json");
    assert_eq!(lab().args(["validate", "--config"]).arg(&missing).status().unwrap().code(), Some(1));
}

#[test]
fn run_writes_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", r#"{"experiment": "flow", "resolution": {"n_time": 256, "m_space": 16}}"#);
    let out_dir = dir.path().join("out");
    let status =
        lab().args(["run", "--threads", "1", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let m = read_manifest(&out_dir.join("manifest.json")).unwrap();
    assert!(m.passed);
    assert_eq!(m.threads, 1);
    assert!(m.outputs.iter().any(|o| o.file.ends_with(".csv")));
    assert!(m.outputs.iter().any(|o| o.file.ends_with(".svg")));
    assert!(m.outputs.iter().any(|o| o.file.ends_with(".bin")));
    for o in &m.outputs {
        let bytes = std::fs::read(out_dir.join(&o.file)).unwrap();
        assert_eq!(sha256_hex(&bytes), o.sha256, "{}", o.file);
        assert_eq!(bytes.len() as u64, o.bytes);
    }
    let phi = FlatArray::read(&out_dir.join("flow_phi.bin")).unwrap();
    assert_eq!(phi.dims[1], 16);
    let checks = read_csv(&out_dir.join("checks.csv")).unwrap();
    assert_eq!(checks.rows.len(), m.checks.len());
}

#[test]
fn threshold_miss_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"experiment": "peano", "seeds": 4, "resolution": {"n_time": 512}, "params": {"min_separation": 100.0}}"#,
    );
    let status = lab().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn env_seed_overrides_config_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", SMALL_PEANO);
    let first = dir.path().join("a");
    let status =
        lab().env("REGNOISE_SEED", "99").args(["run", "--config"]).arg(&cfg).arg("--out").arg(&first).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let m = read_manifest(&first.join("manifest.json")).unwrap();
    assert_eq!(m.master_seed, 99);

    // Rerun from the manifest on two threads: identical CSVs.
    let second = dir.path().join("b");
    let status = lab()
        .args(["run", "--threads", "2", "--config"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m2 = read_manifest(&second.join("manifest.json")).unwrap();
    assert_eq!(m2.master_seed, 99);
    assert_eq!(m2.replica_seeds, m.replica_seeds);
    for o in m.outputs.iter().filter(|o| o.file.ends_with(".csv")) {
        let again = m2.outputs.iter().find(|p| p.file == o.file).unwrap();
        assert_eq!(o.sha256, again.sha256, "{}", o.file);
    }

    let bad = lab().env("REGNOISE_SEED", "abc").args(["validate", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(bad.code(), Some(1));
}
