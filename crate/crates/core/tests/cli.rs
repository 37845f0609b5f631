use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pathinv"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn trapezoid(rows: &[Vec<f64>], col: usize) -> f64 {
    rows.windows(2)
        .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][col] + w[1][col]))
        .sum()
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["sample", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_gives_json_record() {
    let out = bin()
        .args(["sample", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"], "config");
}

#[test]
fn likelihood_densities_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["likelihood", "--config"])
        .arg(config("fermi_densities.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("densities.csv"));
    assert_eq!(header, ["x", "classical", "semiclassical", "exact"]);
    assert_eq!(rows.len(), 30);
    for col in 1..4 {
        assert!((trapezoid(&rows, col) - 1.0).abs() < 1e-6, "column {col}");
    }
    let paths = std::fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.lines().count(), 32);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
}

#[test]
fn exact_reconstruction_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--threads",
            "2",
            "reconstruct",
            "--backend",
            "exact",
            "--seed",
            "7",
            "--config",
        ])
        .arg(config("double_well.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 5);
    for f in files {
        assert!(dir.path().join(f.as_str().unwrap()).is_file());
    }
    assert_eq!(manifest["summary"]["converged"], true);
    assert_eq!(manifest["config"]["sampling"]["seed"], 7);

    let (header, rows) = read_csv(&dir.path().join("densities.csv"));
    assert_eq!(header, ["x", "classical", "semiclassical", "exact", "empirical"]);
    for col in 1..4 {
        assert!((trapezoid(&rows, col) - 1.0).abs() < 1e-6, "column {col}");
    }
    let freq: f64 = rows.iter().map(|r| r[4]).sum();
    assert!((freq - 1.0).abs() < 1e-12);

    let (header, trace) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header, ["iter", "energy", "grad_norm"]);
    assert!(trace.windows(2).all(|w| w[1][1] <= w[0][1]));
    assert!(trace.last().unwrap()[2] <= 1e-4);

    let (header, data) = read_csv(&dir.path().join("dataset.csv"));
    assert_eq!(header, ["index", "node", "x"]);
    assert_eq!(data.len(), 15);
}

#[test]
fn backend_override_resets_derivative_pairing() {
    // the config asks for the lattice derivative, which needs semiclassical paths;
    // --backend resets it to the backend's own pairing, so this is accepted
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sample", "--backend", "classical", "--config"])
        .arg(config("double_well.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 17);
}
