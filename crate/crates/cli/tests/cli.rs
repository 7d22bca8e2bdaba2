//! End-to-end runs of the `dynamo-forge` binary on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "n": 4, "dt": 5e-3, "kappas": [0.0, 0.001], "horizon": 14, "budget": 20,
  "kappa0_grid": [0.0, 1.0],
  "verify": {"n": 8, "dt": 2e-3, "lambdas": [1.0], "identity_n": 4, "tuples": 2,
             "convergence_n": 4, "convergence_dt": 2e-3}
}"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Sandbox {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
        Sandbox { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        let cfg = self.path("cfg.json");
        Command::new(env!("CARGO_BIN_EXE_dynamo-forge"))
            .arg("--config")
            .arg(&cfg)
            .args(args)
            .env_remove("DYNAMO_FORGE_THREADS")
            .output()
            .unwrap()
    }

    fn out(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn verify_passes_and_writes_both_reports() {
    let s = Sandbox::new();
    let o = s.run(&["verify", "--out", &s.out("v")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&s.path("v/verify.json"));
    assert_eq!(v["passed"], Value::Bool(true));
    assert_eq!(v["manifest"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["manifest"]["tolerances"]["matrix"].is_number());
    let x = fs::read_to_string(s.path("v/verify.junit.xml")).unwrap();
    assert!(x.contains("failures=\"0\""));
}

#[test]
fn corrupted_alpha_fails_the_matrix_checks() {
    let s = Sandbox::new();
    let o = s.run(&["verify", "--corrupt-alpha", "0.5", "--out", &s.out("v")]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("FAIL matrix_U(1)"), "{err}");
    let x = fs::read_to_string(s.path("v/verify.junit.xml")).unwrap();
    assert!(x.contains("<failure message=\"measured"));
    let v = json(&s.path("v/verify.json"));
    assert!(v["failures"].as_array().unwrap().iter().any(|f| f == "matrix_W(1)"));
}

#[test]
fn undersized_translation_grid_warns_about_aliasing() {
    let s = Sandbox::new();
    let o = s.run(&["verify", "--m", "6", "--out", &s.out("v")]);
    let v = json(&s.path("v/verify.json"));
    let avg = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "averaged_matrix").unwrap().clone();
    assert!(avg["detail"].as_str().unwrap().contains("aliasing warning"), "{avg}");
    assert!(code(&o) == 0 || code(&o) == 1);
}

#[test]
fn grow_reaches_the_threshold_and_refuses_uncertified_kappa() {
    let s = Sandbox::new();
    let o = s.run(&["grow", "--kappa", "0", "--out", &s.out("g")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = json(&s.path("g/grow.json"));
    assert!(g["threshold_time"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(s.path("g/grow_series.csv")).unwrap();
    assert!(csv.starts_with("t,kappa,log_l2sq,max_rate,rate(1,0,0)"));
    let last = csv.lines().last().unwrap();
    let max_rate: f64 = last.split(',').nth(3).unwrap().parse().unwrap();
    assert!(max_rate >= 0.25);

    let o = s.run(&["grow", "--kappa", "0.05", "--out", &s.out("g2")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kappa0_emp = 1e-2"), "{}", stderr(&o));
    let o = s.run(&["grow", "--kappa", "0.05", "--budget", "4", "--allow-uncertified", "--out", &s.out("g3")]);
    assert_ne!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn output_collision_needs_force() {
    let s = Sandbox::new();
    assert_eq!(code(&s.run(&["grow", "--kappa", "0", "--out", &s.out("g")])), 0);
    let o = s.run(&["grow", "--kappa", "0", "--out", &s.out("g")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--force"));
    assert_eq!(code(&s.run(&["grow", "--kappa", "0", "--force", "--out", &s.out("g")])), 0);
}

#[test]
fn schedule_is_deterministic_and_replayable() {
    let s = Sandbox::new();
    let o = s.run(&["schedule", "--replay-check", "--out", &s.out("a")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("crossings"));
    let a = json(&s.path("a/schedule.json"));
    assert_eq!(a["status"], "horizon_reached");
    assert!(a["replay"]["passed"].as_bool().unwrap());
    for c in a["crossing_counts"].as_array().unwrap() {
        assert!(c.as_u64().unwrap() >= 2);
    }

    assert_eq!(code(&s.run(&["schedule", "--replay-check", "--out", &s.out("b")])), 0);
    for f in ["schedule.json", "series.csv", "crossings.csv", "flow.json", "final_fields.json"] {
        let x = fs::read(s.path(&format!("a/{f}"))).unwrap();
        let y = fs::read(s.path(&format!("b/{f}"))).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }

    let flow = s.out("a/flow.json");
    let finals = s.out("a/final_fields.json");
    let o = s.run(&["replay", "--flow", &flow, "--compare", &finals, "--out", &s.out("r")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&s.path("r/replay.json"));
    assert!(r["comparison"]["max_distance"].as_f64().unwrap() < 1e-8);
}

#[test]
fn short_horizon_reports_budget_exhausted() {
    let s = Sandbox::new();
    let o = s.run(&["schedule", "--horizon", "2.5", "--out", &s.out("s")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("budget exhausted"));
    let v = json(&s.path("s/schedule.json"));
    assert_eq!(v["status"], "budget_exhausted");
    assert!(s.path("s/flow.json").exists());
}

#[test]
fn kappa0_certificate_gates_later_runs() {
    let s = Sandbox::new();
    let o = s.run(&["scan-kappa0", "--out", &s.out("k")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(&s.path("k/certificate.json"));
    assert_eq!(c["kappa0_emp"].as_f64(), Some(0.0));
    let rows = c["rows"].as_array().unwrap();
    assert!(rows[0]["pass"].as_bool().unwrap());
    // closed-form top eigenvalue; N = 4 truncates the Bessel tails at ~1e-5
    assert!((rows[0]["lambda1"].as_f64().unwrap() - 13.125_791_883_237_244).abs() < 1e-4);
    assert!(!rows[1]["pass"].as_bool().unwrap());
    let csv = fs::read_to_string(s.path("k/kappa0_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let cert = s.out("k/certificate.json");
    let o = s.run(&["grow", "--kappa", "0.001", "--certificate", &cert, "--out", &s.out("g")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kappa0_emp = 0e0"), "{}", stderr(&o));
    let o = s.run(&["grow", "--kappa", "0", "--certificate", &cert, "--out", &s.out("g")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    let s = Sandbox::new();
    fs::write(s.path("bad.json"), r#"{"n": 4, "horizn": 3}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dynamo-forge"))
        .args(["--config", s.path("bad.json").to_str().unwrap(), "verify", "--out", &s.out("x")])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("horizn"));
    assert_eq!(code(&s.run(&["schedule", "--kappas", "", "--out", &s.out("y")])), 2);
    assert_eq!(code(&s.run(&["grow", "--out", &s.out("z")])), 2);
    assert_eq!(code(&s.run(&["verify", "--threads", "0", "--out", &s.out("w")])), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_dynamo-forge"))
        .args(["--config", s.path("cfg.json").to_str().unwrap(), "grow", "--kappa", "0", "--out", &s.out("t")])
        .env("DYNAMO_FORGE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
