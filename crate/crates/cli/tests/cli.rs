use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn law(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../laws")
        .join(name)
        .display()
        .to_string()
}

fn gwf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwf"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("gwf runs")
}

fn report(out: &Path, command: &str) -> Value {
    let text = fs::read_to_string(out.join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn laminations_reaches_chain_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwf(dir.path(), &["laminations", "--seed", "1"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(dir.path(), "laminations");
    assert_eq!(r["pass"], true);
    let z50 = r["result"]["report"]["zn"][0]["value"].as_f64().unwrap();
    assert!((z50 - 0.626075).abs() < 1e-3);
    assert!(dir.path().join("laminations.meta.json").exists());
}

#[test]
fn reduce_verifies_heights() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwf(
        dir.path(),
        &[
            "reduce",
            "--law",
            &law("multitype.json"),
            "--budget",
            "500",
            "--verify-prop1",
            "--traces",
            "--seed",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path(), "reduce");
    assert_eq!(r["result"]["prop1"], true);
    let csv = fs::read_to_string(dir.path().join("reduced.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("original_id"));
}

#[test]
fn reducible_law_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwf(
        dir.path(),
        &[
            "spectral",
            "--law",
            &law("bad_reducible.json"),
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean matrix not irreducible"));
}

#[test]
fn unknown_law_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwf(
        dir.path(),
        &["spectral", "--law", "no/such/law.json", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = gwf(
        dir.path(),
        &[
            "verify-mto",
            "--law",
            &law("multitype.json"),
            "--n",
            "3",
            "--R",
            "10000",
            "--z-threshold",
            "0.001",
            "--seed",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(dir.path(), "verify-mto")["pass"], false);
}

#[test]
fn reports_are_reproducible_across_threads() {
    let runs: Vec<(tempfile::TempDir, &str)> = vec![
        (tempfile::tempdir().unwrap(), "1"),
        (tempfile::tempdir().unwrap(), "1"),
        (tempfile::tempdir().unwrap(), "4"),
    ];
    let dirs: Vec<PathBuf> = runs.iter().map(|(d, _)| d.path().to_path_buf()).collect();
    for (d, threads) in &runs {
        let args = [
            "--threads",
            threads,
            "verify-mto",
            "--law",
            &law("geometric.json"),
            "--n",
            "4",
            "--R",
            "20000",
            "--seed",
            "11",
        ];
        assert_eq!(gwf(d.path(), &args).status.code(), Some(0));
        let args = [
            "--threads",
            threads,
            "sample-leafed",
            "--law",
            &law("leafed.json"),
            "--budget",
            "300",
            "--param-samples",
            "2000",
            "--traces",
            "--seed",
            "5",
        ];
        assert_eq!(gwf(d.path(), &args).status.code(), Some(0));
    }
    for name in [
        "verify-mto.json",
        "sample-leafed.json",
        "forest.csv",
        "vertices.csv",
        "type1.csv",
    ] {
        let first = bytes(&dirs[0], name);
        assert_eq!(first, bytes(&dirs[1], name), "{name} differs between runs");
        assert_eq!(
            first,
            bytes(&dirs[2], name),
            "{name} differs between thread counts"
        );
    }
}
