use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const GEO: &str = r#""spec": {"alpha": "1", "rho": "0.5", "m": 1, "h": {"kind": "constant", "params": {"c": "1"}}}"#;

fn run(dir: &Path, body: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.json");
    fs::write(&cfg, format!(r#"{{"schema": "expansive/1", {body}}}"#)).unwrap();
    Command::new(env!("CARGO_BIN_EXE_expansive"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join("out").join(file)).unwrap()
}

fn partitions(n: usize) -> String {
    let mut w = vec!["0".to_string()];
    w.extend(std::iter::repeat_n("1".to_string(), n));
    format!(r#""weights": {w:?}"#)
}

#[test]
fn partition_rows_sum_to_partition_numbers() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &partitions(40), &["transform", "--exact"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut p = vec![0u128; 41];
    for line in read(d.path(), "exp_table.csv").lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        p[f[0].parse::<usize>().unwrap()] += f[2].parse::<u128>().unwrap();
    }
    assert_eq!(p[10], 42);
    assert_eq!(p[40], 37338);
    assert_eq!(read(d.path(), "exp_table.csv"), read(d.path(), "product_table.csv"));
    assert!(read(d.path(), "equality.csv").contains(",true,0"));
    let manifest: serde_json::Value = serde_json::from_str(&read(d.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["arithmetic"], "exact");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn empty_weights_give_a_single_cell() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), r#""weights": []"#, &["transform", "--exact"]);
    assert!(out.status.success());
    assert_eq!(read(d.path(), "exp_table.csv"), "n,N,g\n0,0,1\n");
}

#[test]
fn exact_outputs_do_not_depend_on_threads() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let body = format!(r#"{GEO}, "n_max": 60, "N_max": 30"#);
    assert!(run(a.path(), &body, &["transform", "--exact", "--threads", "1"]).status.success());
    assert!(run(b.path(), &body, &["transform", "--exact", "--threads", "8"]).status.success());
    for f in ["exp_table.csv", "product_table.csv", "equality.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn sample_streams_are_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let body = format!(r#"{GEO}, "n": 200, "lambda": 0.5, "draws": 10000"#);
    assert!(run(a.path(), &body, &["sample", "--seed", "7", "--threads", "1"]).status.success());
    assert!(run(b.path(), &body, &["sample", "--seed", "7", "--threads", "8"]).status.success());
    let text = read(a.path(), "samples.csv");
    assert_eq!(text, read(b.path(), "samples.csv"));
    assert_eq!(text.lines().count(), 10_001);
    let c = TempDir::new().unwrap();
    assert!(run(c.path(), &body, &["sample", "--seed", "8"]).status.success());
    assert_ne!(text, read(c.path(), "samples.csv"));
}

#[test]
fn replay_reproduces_outputs() {
    let d = TempDir::new().unwrap();
    let body = format!(r#"{GEO}, "n": 200, "lambda": 0.5, "draws": 500"#);
    assert!(run(d.path(), &body, &["sample", "--seed", "3"]).status.success());
    let r = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_expansive"))
        .args(["replay", "--config"])
        .arg(d.path().join("out/manifest.json"))
        .arg("--out")
        .arg(r.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(d.path(), "samples.csv"), fs::read_to_string(r.path().join("samples.csv")).unwrap());
}

#[test]
fn exit_codes_follow_error_kinds() {
    let d = TempDir::new().unwrap();
    let code = |body: &str, args: &[&str]| run(d.path(), body, args).status.code().unwrap();
    assert_eq!(code(&format!(r#"{GEO}, "n": 10, "bogus": 1"#), &["saddle"]), 2);
    assert_eq!(code(&format!(r#"{GEO}, "n": 400, "lambda": 1.0"#), &["asym"]), 2);
    assert_eq!(code(&format!(r#"{GEO}, "n": 5000, "lambda": 0.5"#), &["compare"]), 5);
    assert_eq!(code(&format!(r#""command": "saddle", {GEO}, "n": 10, "N": 2"#), &["asym"]), 2);
    assert_eq!(code(&format!(r#"{GEO}, "n": 10, "N": 11"#), &["saddle"]), 3);
    assert_eq!(code(&format!(r#"{GEO}, "n": 400, "lambda": 0.5"#), &["asym"]), 0);
}

#[test]
fn window_needs_explicit_permission() {
    let d = TempDir::new().unwrap();
    let body = format!(r#"{GEO}, "n": 400, "lambda": 1.0"#);
    let out = run(d.path(), &body, &["asym"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-window"));
    let out = run(d.path(), &body, &["asym", "--allow-window"]);
    assert!(out.status.success());
    assert!(read(d.path(), "window_saddle.csv").contains(",Window,"));
}

fn column(text: &str, name: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let i = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[i].to_string()).collect()
}

#[test]
fn matched_formulas_improve_with_n() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &format!(r#"{GEO}, "n_grid": [200, 800], "lambda": 0.5"#), &["compare"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(d.path(), "compare.csv");
    let forms = column(&text, "formula");
    let ratios = column(&text, "ratio");
    let err: Vec<f64> = forms
        .iter()
        .zip(&ratios)
        .filter(|(f, _)| *f == "LLT_I")
        .map(|(_, r)| (r.parse::<f64>().unwrap() - 1.0).abs())
        .collect();
    assert_eq!(err.len(), 2);
    assert!(err[1] < err[0] && err[1] < 0.05, "{err:?}");
}

#[test]
fn phase_sweep_skips_window_with_notice() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &format!(r#"{GEO}, "n": 800, "lambda_grid": [0.5, 1.0, 2.0]"#), &["phase-sweep"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped"));
    let text = read(d.path(), "phase_sweep.csv");
    assert_eq!(column(&text, "regime"), ["case_i", "case_ii"]);
    let yr: Vec<f64> = column(&text, "y_rho_m").iter().map(|v| v.parse().unwrap()).collect();
    assert!(yr[0] < 1.0 && (yr[1] - 1.0).abs() < 0.2, "{yr:?}");
}

#[test]
fn json_format_is_available() {
    let d = TempDir::new().unwrap();
    let out = run(d.path(), &format!(r#"{GEO}, "n_grid": [100, 1000]"#), &["nstar", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(d.path(), "nstar.json")).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}
