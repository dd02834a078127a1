use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MC_CONFIG: &str = r#"
kind = "mc-parametric"
replications = 200

[model]
sigma = [[1.0, 0.5], [0.5, 1.0]]
n = 10000

[mc]
estimator = "both"
"#;

fn effcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effcov")).args(args).output().expect("binary runs")
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("c.toml");
    fs::write(&p, MC_CONFIG).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = effcov(&[]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert_eq!(err["error"]["kind"], "usage");
    assert!(err["error"]["message"].as_str().unwrap().contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = effcov(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"]["kind"], "usage");
}

#[test]
fn fisher_scalar_brownian_motion() {
    let out = effcov(&["fisher", "--spectrum", "bm", "--d", "1", "--sigma", "1", "--eta", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out.stdout);
    assert!((v["info"][0][0].as_f64().unwrap() - 0.0625).abs() < 1e-12);
    assert!((v["quarter_inverse_z"][0][0].as_f64().unwrap() - 8.0).abs() < 1e-12);
}

#[test]
fn too_few_replications_needs_force() {
    let out = effcov(&["mc", "--n", "10000", "--replications", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("--force"));
    let out = effcov(&["mc", "--n", "10000", "--replications", "10", "--force"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out.stdout)["replications"], 10);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let out = effcov(&["fisher", "--out", "/nonexistent-dir/x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out.stderr)["error"]["kind"], "runtime");
}

#[test]
fn mc_runs_are_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let (a, b, c) = (path("a.json"), path("b.json"), path("c.json"));
    for (out, threads) in [(&a, "1"), (&b, "1"), (&c, "8")] {
        let r = effcov(&["mc", "--config", &cfg, "--seed", "42", "--threads", threads, "--out", out]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    assert_eq!(first, fs::read(&c).unwrap());
    let v = json(&first);
    assert_eq!(v["seed"], 42);
    assert!(v["wall_ms"].is_null());
    assert!(v["adaptive_oracle_gap"]["median"].as_f64().unwrap() > 0.0);
}

#[test]
fn report_regenerates_from_its_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let first = effcov(&["mc", "--config", &cfg, "--seed", "7"]);
    assert_eq!(first.status.code(), Some(0));
    let v = json(&first.stdout);
    let echo: effcov::bench::ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
    let echoed = dir.path().join("echo.toml");
    fs::write(&echoed, echo.to_toml().unwrap()).unwrap();
    let second = effcov(&["mc", "--config", &echoed.to_string_lossy()]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn csv_and_json_carry_identical_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let j = effcov(&["mc", "--config", &cfg]);
    assert_eq!(j.status.code(), Some(0));
    let v = json(&j.stdout);
    let out = dir.path().join("r.csv");
    let c = effcov(&["mc", "--config", &cfg, "--format", "csv", "--out", &out.to_string_lossy()]);
    assert_eq!(c.status.code(), Some(0));

    let rows = csv_rows(&out);
    let est = v["estimates"].as_array().unwrap();
    assert_eq!(rows.len(), est.len());
    for (row, e) in rows.iter().zip(est) {
        let e = e.as_array().unwrap();
        assert_eq!(row.len(), e.len() + 1);
        for (cell, x) in row[1..].iter().zip(e) {
            assert_eq!(cell.parse::<f64>().unwrap(), x.as_f64().unwrap());
        }
    }

    let summary = csv_rows(&dir.path().join("r.summary.csv"));
    let flat: std::collections::HashMap<_, _> = effcov::bench::report::flatten_json(&v).into_iter().collect();
    let mut numeric = 0;
    for row in &summary {
        let want = flat.get(&row[0]).unwrap_or_else(|| panic!("key {} missing from JSON", row[0]));
        assert_eq!(&row[1], want, "key {}", row[0]);
        if row[1].parse::<f64>().is_ok() {
            numeric += 1;
        }
    }
    assert!(numeric > 40);
}

#[test]
fn simulated_csv_reproduces_the_in_process_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("y.csv");
    let model = ["--sigma", "1,0.5;0.5,1", "--n", "10000", "--seed", "5"];
    let mut sim = vec!["simulate", "--format", "csv", "--out"];
    let data_s = data.to_string_lossy().into_owned();
    sim.push(&data_s);
    sim.extend(model);
    let s = effcov(&sim);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));

    let mut from_file = vec!["estimate", "--input", &data_s];
    from_file.extend(model);
    let e = effcov(&from_file);
    assert_eq!(e.status.code(), Some(0), "{}", String::from_utf8_lossy(&e.stderr));
    let mut in_process = vec!["estimate"];
    in_process.extend(model);
    let f = effcov(&in_process);
    assert_eq!(f.status.code(), Some(0));

    let (a, b) = (json(&e.stdout), json(&f.stdout));
    assert_eq!(a["external_data"], true);
    assert_eq!(b["external_data"], false);
    assert_eq!(a["adaptive"]["estimate"], b["adaptive"]["estimate"]);
    assert!(a["oracle"].is_null());
    assert!(b["oracle"]["estimate"].is_array());
}

#[test]
fn lan_and_equiv_subcommands() {
    let l = effcov(&["lan", "--sigma", "1", "--n", "10000", "--replications", "200"]);
    assert_eq!(l.status.code(), Some(0), "{}", String::from_utf8_lossy(&l.stderr));
    let v = json(&l.stdout);
    assert!((v["report"]["target_variance"].as_f64().unwrap() - 0.125).abs() < 1e-12);
    let q = effcov(&["equiv", "--sigma", "1", "--alt", "bb", "--n-list", "10000,1000000"]);
    assert_eq!(q.status.code(), Some(0), "{}", String::from_utf8_lossy(&q.stderr));
    assert_eq!(json(&q.stdout)["report"]["verdict"], "vanishing");
}
