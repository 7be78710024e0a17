//! The binary end to end: exit codes, written files and `validate`.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fucik-lab"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .env_remove("FUCIK_LAB_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn column(csv_path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

fn validate(path: &Path) -> i32 {
    let o = Command::new(env!("CARGO_BIN_EXE_fucik-lab")).arg("validate").arg(path).output().unwrap();
    code(&o)
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["solve", "--case", "sideways"])), 1);
    assert_eq!(code(&run(dir.path(), &["eigs", "no/such/config.toml"])), 1);
}

#[test]
fn missing_s_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[mesh]\ndim = 1\nextent = [[-1.0, 1.0]]\nn_cells = [32]\n").unwrap();
    let o = run(&dir.path().join("out"), &["eigs", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`s`"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[mesh]\ndim = 1\nextent = [[-1.0, 1.0]]\nn_cells = [32]\ns = 0.2\nsize = 3\n").unwrap();
    let o = run(&dir.path().join("out"), &["eigs", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("size"));
}

#[test]
fn eigs_reruns_are_byte_identical_and_validate() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run(a.path(), &["--seed", "7", "eigs"])), 0);
    assert_eq!(code(&run(b.path(), &["--seed", "7", "eigs"])), 0);
    for name in ["eigenvalues.csv", "eigs.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let lambda = column(&a.path().join("eigenvalues.csv"), "lambda");
    assert!(lambda.windows(2).all(|w| w[0] <= w[1]) && lambda[0] > 0.0, "{lambda:?}");
    assert_eq!(validate(a.path()), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
}

#[test]
fn fucik_writes_a_decreasing_nu_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["fucik"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = dir.path().join("fucik_curves.csv");
    let nu = column(&csv, "nu");
    assert_eq!(nu.len(), 17);
    assert!(nu.windows(2).all(|w| w[1] < w[0]), "{nu:?}");
    // at s = 0.2 the curves are within the bisection tolerance of each other
    let (nu_lo, mu_hi) = (column(&csv, "nu_lo"), column(&csv, "mu_hi"));
    assert!(nu_lo.iter().zip(&mu_hi).all(|(n, m)| n <= m));
    assert_eq!(validate(dir.path()), 0);
}

#[test]
fn flagged_checks_exit_two_and_still_write_reports() {
    // three grid points at 64 cells leave the seminorm excess negative, so
    // its exponent cannot be fitted
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bubble-check"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("flagged:"));
    assert!(dir.path().join("bubble_estimates.csv").exists());
    assert_eq!(validate(dir.path()), 0);
}

#[test]
fn solve_and_degiorgi_pass_on_the_default_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("solve"), &["solve", "--case", "above-mu"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("solve/solve.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "critical_point");
    assert!(report["residual"].as_f64().unwrap() < 1e-8);
    assert!(column(&dir.path().join("solve/solution.csv"), "u").iter().any(|&u| u != 0.0));
    assert_eq!(validate(&dir.path().join("solve")), 0);

    let o = run(&dir.path().join("dg"), &["degiorgi"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let dg: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("dg/degiorgi.json")).unwrap()).unwrap();
    let r = &dg["report"];
    assert!(r["bound"].as_f64().unwrap() >= r["nodal_max"].as_f64().unwrap());
    assert_eq!(validate(&dir.path().join("dg")), 0);
}

#[test]
fn a_case_contradicting_the_point_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve", "--case", "below-nu"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("inconsistent"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fucik-lab"))
        .arg("--output-dir")
        .arg(dir.path())
        .arg("eigs")
        .env("FUCIK_LAB_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 2);
}

#[test]
fn validate_reports_tampering_and_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["eigs"])), 0);
    let csv = dir.path().join("eigenvalues.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("1,2,3,4\n");
    fs::write(&csv, text).unwrap();
    assert_eq!(validate(dir.path()), 2);
    assert_eq!(validate(&dir.path().join("absent")), 1);
}
