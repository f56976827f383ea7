use std::path::Path;
use std::process::{Command, Output};

use palign_core::harness::VerifyConfig;
use tempfile::TempDir;

fn palign(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_palign"));
    c.args(args).env_remove("PALIGN_BUDGET");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("spawn palign")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SWEEP: &str = r#"{
  "model": "er",
  "grid": {"n": [7], "m": [2, 4], "p": [0.3], "rho": [0.5, 0.95]},
  "trials_per_point": 6,
  "master_seed": 3
}"#;

#[test]
fn sample_then_align_recovers_a_perfectly_correlated_instance() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("inst.json");
    let o = palign(
        &["sample", "--model", "gaussian", "--n", "6", "--m", "4", "--rho", "1", "--seed", "9", "--out", inst.to_str().unwrap()],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = palign(&["align", "--instance", inst.to_str().unwrap(), "--score", "sqdiff"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["overlap"], 1.0);
    assert_eq!(v["distance"], 0);

    let bf = palign(&["align", "--instance", inst.to_str().unwrap(), "--score", "sqdiff", "--brute-force"], &[]);
    assert_eq!(bf.stdout, o.stdout);
}

#[test]
fn sweep_output_is_identical_across_job_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.json", SWEEP);
    let run = |jobs: &str| {
        let out = dir.path().join(format!("out{jobs}.csv"));
        let o = palign(&["sweep", "--config", &cfg, "--jobs", jobs, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let one = run("1");
    assert_eq!(run("2"), one);
    assert_eq!(run("4"), one);
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("point_id,model,score,n,m,p,rho"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn sweep_formats() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.json", SWEEP);
    let o = palign(&["sweep", "--config", &cfg, "--format", "json"], &[]);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows.len(), 4);
    let o = palign(&["sweep", "--config", &cfg, "--format", "svg"], &[]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("<svg"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&palign(&["sweep"], &[])), 2);
    assert_eq!(code(&palign(&["no-such-command"], &[])), 2);
    assert_eq!(code(&palign(&["sweep", "--jobs", "0"], &[])), 2);
    let bad = write(&dir, "bad.json", r#"{"model": "er", "grid": {"n": [5], "m": [2], "rho": [0.5]}, "trials_per_point": 1}"#);
    let o = palign(&["sweep", "--config", &bad], &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("p"), "{}", stderr(&o));
    let unknown = write(&dir, "unknown.json", &SWEEP.replace("\"master_seed\"", "\"master_sed\""));
    assert_eq!(code(&palign(&["sweep", "--config", &unknown], &[])), 2);
    assert_eq!(code(&palign(&["sweep", "--config", &cfg_path(&dir)], &[("PALIGN_BUDGET", "lots")])), 2);
}

fn cfg_path(dir: &TempDir) -> String {
    write(dir, "ok.json", SWEEP)
}

#[test]
fn resource_errors_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("inst.json");
    palign(&["sample", "--model", "er", "--n", "8", "--m", "4", "--p", "0.3", "--rho", "0.5", "--out", inst.to_str().unwrap()], &[]);
    let o = palign(&["align", "--instance", inst.to_str().unwrap()], &[("PALIGN_BUDGET", "100")]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("budget"));
    let missing = palign(&["align", "--instance", "/nonexistent/inst.json"], &[]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("/nonexistent/inst.json"));
}

#[test]
fn sweep_over_budget_points_are_skipped_not_fatal() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.json", SWEEP);
    let o = palign(&["sweep", "--config", &cfg], &[("PALIGN_BUDGET", "1000")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    // m = 4 needs C(7,4)^2 4! = 29400 > 1000 enumerations
    let skipped = text.lines().find(|l| l.starts_with("1,")).unwrap();
    assert!(skipped.contains(",0.5,0,6,") && skipped.contains("budget exceeded"), "{text}");
}

#[test]
fn verify_all_fault_injection_and_empty_grid() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.json", &serde_json::to_string(&VerifyConfig::empty()).unwrap());
    let o = palign(&["verify-all", "--config", &empty], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!rep["warnings"].as_array().unwrap().is_empty());

    let small = VerifyConfig { er_grid: palign_core::cumulant::default_er_grid(), ..VerifyConfig::empty() };
    let small = write(&dir, "small.json", &serde_json::to_string(&small).unwrap());
    assert_eq!(code(&palign(&["verify-all", "--config", &small], &[])), 0);
    let o = palign(&["verify-all", "--config", &small, "--perturb-c2", "-1e-3"], &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("failed checks: kappa-chain-er"), "{}", stderr(&o));
}

#[test]
fn verify_cumulants_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = VerifyConfig { er_grid: palign_core::cumulant::default_er_grid(), ..VerifyConfig::empty() };
    let cfg = write(&dir, "cfg.json", &serde_json::to_string(&cfg).unwrap());
    let out = dir.path().join("cumulants.csv");
    let o = palign(&["verify-cumulants", "--config", &cfg, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(Path::new(&out)).unwrap();
    assert_eq!(text.lines().count(), 1 + 27 * 8 * 2);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn thresholds_and_phase_diagram() {
    let o = palign(&["thresholds", "--model", "er", "--n", "1e6", "--m", "100", "--p", "0.1", "--rho", "0.5"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["partial_er"].as_f64().unwrap() > 0.0);
    assert_eq!(code(&palign(&["thresholds", "--model", "er", "--n", "100", "--m", "5", "--rho", "0.5"], &[])), 2);

    let o = palign(&["phase-diagram", "--steps", "3"], &[]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("a1,a2,a3_partial,a3_exact,partial_log_n,exact_log_n"));
    assert_eq!(text.lines().count(), 10);
    assert!(text.contains("0.25,0.75,1.5,1.5,true,true"), "{text}");
}

#[test]
fn phase_experiment_reports_crossings() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "phase.json",
        r#"{"model": "gaussian", "n": 7, "rho": [0.5, 1.0], "m": [3, 4], "trials": 4, "score": "sqdiff"}"#,
    );
    let o = palign(&["phase", "--config", &spec, "--seed", "2"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 5);
    assert!(stderr(&o).contains("rho=1 exact 50% crossing m=3.000"), "{}", stderr(&o));
}
