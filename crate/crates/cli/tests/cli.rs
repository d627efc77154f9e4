//! End-to-end runs of the `sublinear` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sublinear(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sublinear"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn iteration_agrees_with_the_heat_solver() {
    let it = sublinear(&["gnormal-iter", "--phi", "x3", "--band", "0.5,1", "--n", "100"]);
    assert_eq!(it.status.code(), Some(0));
    let v = stdout_json(&it)["value"].as_f64().unwrap();
    assert!(v > 0.0);
    let pde = sublinear(&["pde", "--phi", "x3", "--band", "0.5,1"]);
    assert_eq!(pde.status.code(), Some(0));
    let u = stdout_json(&pde)["value_at_zero"].as_f64().unwrap();
    assert!((v - u).abs() < 1e-2, "{v} vs {u}");
}

#[test]
fn skeleton_third_moment() {
    let out = sublinear(&["skeleton", "--phi", "(x1+x2)^3", "--band", "1,2", "--set", "L2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out)["value"].as_f64().unwrap();
    assert!((v - 7.1809).abs() < 1e-4, "{v}");
}

#[test]
fn exit_codes() {
    let out = sublinear(&["gnormal-iter", "--phi", "x3", "--band", "2,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = sublinear(&["pde", "--phi", "x2", "--band", "0.5,1", "--dt", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("largest stable dt"));

    let out = sublinear(&["pde", "--phi", "x2", "--band", "0.5,1", "--cells", "100", "--phi", "1e13*x2"]);
    assert_eq!(out.status.code(), Some(2));

    let blowup = r#"{"variant":"Polynomial","params":{"coefficients":[0,0,1e13]},"convexity":"Convex","growth_order":2}"#;
    let out = sublinear(&["pde", "--phi", blowup, "--band", "0.5,1", "--cells", "100"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(sublinear(&["no-such-verb"]).status.code(), Some(2));
    assert_eq!(sublinear(&[]).status.code(), Some(2));
    assert_eq!(sublinear(&["--help"]).status.code(), Some(0));
}

#[test]
fn files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let result = dir.path().join("curve.json");
    let out = sublinear(&[
        "capacity",
        "--band",
        "1,2",
        "--thresholds",
        "-1,0,1",
        "--output",
        result.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let curve = read_json(&result);
    assert_eq!(curve["curve"]["upper"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let manifest = read_json(&dir.path().join("curve.json.manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["config"]["command"], "capacity");
    assert_eq!(manifest["config"]["params"]["thresholds"], "-1,0,1");
    assert_eq!(manifest["config"]["numerics"]["hermite_order"], 40);
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = sublinear(&[
            "demo-notgnormal",
            "--samples",
            "2000",
            "--blocks",
            "5",
            "--seed",
            seed,
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(&path).unwrap(), fs::read(path.with_extension("csv")).unwrap())
    };
    let a = run("a.json", "5");
    let b = run("b.json", "5");
    let c = run("c.json", "6");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"command": "semignormal", "params": {"phi": "call:0", "band": "1,2"}, "seed": 3,
            "numerics": {"sigma_grid": 33}}"#,
    )
    .unwrap();
    let out = sublinear(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out)["upper"]["value"].as_f64().unwrap();
    assert!((v - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);

    let out = sublinear(&["--config", cfg.to_str().unwrap(), "semignormal", "--band", "1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out)["upper"]["value"].as_f64().unwrap();
    assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);

    fs::write(&cfg, r#"{"command": "semignormal", "parms": {}}"#).unwrap();
    assert_eq!(sublinear(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&cfg, r#"{"command": "semignormal", "params": {"phi": "x2", "band": "1,2", "bogus": 1}}"#).unwrap();
    assert_eq!(sublinear(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    fs::write(&cfg, r#"{"command": "pde"}"#).unwrap();
    assert_eq!(sublinear(&["--config", cfg.to_str().unwrap(), "joint"]).status.code(), Some(2));
}

#[test]
fn robust_interval_with_a_short_simulation() {
    let out = sublinear(&[
        "robust-ci",
        "--band",
        "1,2",
        "--design",
        "1:20:20",
        "--coverage-reps",
        "4000",
        "--policies",
        "const-hi,sign-feedback,dp-replay",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_json(&out);
    let c = r["critical_value"]["c"].as_f64().unwrap();
    assert!(c > r["naive_hi_c"].as_f64().unwrap() * 0.99 && c < 2.0 * r["naive_hi_c"].as_f64().unwrap());
    assert_eq!(r["coverage"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_selected_criteria() {
    let out = sublinear(&["verify", "--only", "2,10,12,13"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_json(&out);
    assert_eq!(r["criteria"].as_array().unwrap().len(), 4);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("criterion")).count(), 4);
    assert_eq!(sublinear(&["verify", "--only", "15"]).status.code(), Some(2));
}

#[test]
fn verify_full_suite_passes() {
    let out = sublinear(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
