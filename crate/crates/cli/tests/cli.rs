use std::fs;
use std::path::{Path, PathBuf};

use assert_cmd::Command;
use eiv_core::io::write_dataset;
use eiv_core::simlab::{generate_dataset, SimConfig};
use predicates::prelude::*;
use tempfile::TempDir;

fn eiv() -> Command {
    Command::cargo_bin("eiv").expect("binary is built")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

/// A table1_p10 copy with fewer replications.
fn small_config(dir: &TempDir, r: usize) -> PathBuf {
    let text = fs::read_to_string(config("table1_p10")).unwrap();
    let path = dir.path().join("small.toml");
    fs::write(&path, text.replace("R = 100", &format!("R = {r}"))).unwrap();
    path
}

fn reference_data(dir: &TempDir) -> (PathBuf, PathBuf) {
    let d = generate_dataset(&SimConfig::reference(10, 1, 11), 0).unwrap();
    let (data, x) = (dir.path().join("data.csv"), dir.path().join("x.csv"));
    write_dataset(&d, &data, Some(&x)).unwrap();
    (data, x)
}

fn report_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{text}"))
        .to_string()
}

#[test]
fn huge_tau_gives_the_zero_fit() {
    let dir = TempDir::new().unwrap();
    let (data, _) = reference_data(&dir);
    let out = eiv()
        .args(["fit", "--estimator", "dantzig", "--tau", "1e6", "--data"])
        .arg(&data)
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(report_value(&text, "status"), "optimal");
    for j in 1..=10 {
        let v: f64 = report_value(&text, &format!("theta_hat[{j}]")).parse().unwrap();
        assert!(v.abs() < 1e-8, "theta_hat[{j}] = {v}");
    }
}

#[test]
fn missing_data_is_a_usage_error() {
    eiv()
        .args(["fit", "--estimator", "dantzig"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("--data"));
}

#[test]
fn compensated_selector_on_simulated_data() {
    let dir = TempDir::new().unwrap();
    let (data, x) = reference_data(&dir);
    let out = dir.path().join("fit.txt");
    eiv()
        .args(["fit", "--estimator", "l1l2linf_cmu", "--lambda", "1", "--nu", "1"])
        .args(["--tau", "0.0177", "--beta", "0.1164", "--dhat", "0.5", "--safeguards"])
        .arg("--data")
        .arg(&data)
        .arg("--x-data")
        .arg(&x)
        .arg("--out")
        .arg(&out)
        .assert()
        .success()
        .stdout(predicate::str::contains("status = optimal"));
    let text = fs::read_to_string(&out).unwrap();
    let resid: f64 = report_value(&text, "feasibility_residual").parse().unwrap();
    assert!(resid <= 1e-7, "residual {resid}");
    let hash = report_value(&text, "config_hash");
    let coef = fs::read_to_string(dir.path().join("fit.txt.coef.csv")).unwrap();
    let mut lines = coef.lines();
    assert_eq!(lines.next(), Some("index,theta_hat,config_hash"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.ends_with(&hash)));
}

#[test]
fn empty_box_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let (data, _) = reference_data(&dir);
    // θ confined to [5, 6] while the residual bound forces θ near the truth.
    eiv()
        .args(["fit", "--estimator", "dantzig", "--tau", "0.01"])
        .args(["--theta-lower", "5", "--theta-upper", "6", "--data"])
        .arg(&data)
        .assert()
        .code(2)
        .stdout(predicate::str::contains("status = infeasible"));
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "y,z1\n1,2\n3,oops\n").unwrap();
    eiv()
        .args(["fit", "--estimator", "dantzig", "--data"])
        .arg(&data)
        .assert()
        .code(1)
        .stderr(predicate::str::contains("line 3"));
}

#[test]
fn simulate_writes_one_row_per_estimator_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, 4);
    let out = dir.path().join("m.csv");
    eiv()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("estimator_label,lambda,nu,bias,rmse,pr,R_effective,seed,config_hash")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[0].starts_with("Dantzig X,"));
    assert!(rows.iter().all(|r| r.contains(",20240601,")));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 20240601);
    assert_eq!(manifest["tuning"].as_array().unwrap().len(), 11);
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(rows.iter().all(|r| r.ends_with(hash)));
}

#[test]
fn zero_replications_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, 0);
    eiv()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("m.csv"))
        .assert()
        .code(1)
        .stderr(predicate::str::contains("R must be at least 1"));
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(&dir, 3);
    let run = |name: &str, seed: &str, jobs: &str| {
        let out = dir.path().join(name);
        eiv()
            .args(["simulate", "--jobs", jobs, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("EIV_SEED", seed)
            .assert()
            .success();
        fs::read(out).unwrap()
    };
    let a = run("a.csv", "5", "1");
    let b = run("b.csv", "5", "2");
    let c = run("c.csv", "6", "1");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sensitivity_identity_gram() {
    let dir = TempDir::new().unwrap();
    let gram = dir.path().join("id.csv");
    fs::write(&gram, "1,0,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,1\n").unwrap();
    eiv()
        .args(["sensitivity", "--s", "1", "--u", "2", "--check-c", "0.3", "--gram"])
        .arg(&gram)
        .assert()
        .success()
        .stdout(predicate::str::contains("kappa = 0.3333333333"))
        .stdout(predicate::str::contains("condition = holds"));
}

#[test]
fn sensitivity_zero_gram_and_dimension_cap() {
    let dir = TempDir::new().unwrap();
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "0,0\n0,0\n").unwrap();
    eiv()
        .args(["sensitivity", "--s", "1", "--u", "1", "--q", "inf", "--gram"])
        .arg(&zero)
        .assert()
        .success()
        .stdout(predicate::str::contains("kappa = 0.0000000000"));

    let big = dir.path().join("big.csv");
    let rows: Vec<String> = (0..13)
        .map(|i| (0..13).map(|j| if i == j { "1" } else { "0" }).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(&big, rows.join("\n") + "\n").unwrap();
    eiv()
        .args(["sensitivity", "--s", "2", "--u", "1", "--gram"])
        .arg(&big)
        .assert()
        .code(1)
        .stderr(predicate::str::contains("12"));
}
