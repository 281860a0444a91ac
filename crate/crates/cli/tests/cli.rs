use std::path::Path;
use std::process::{Command, Output};

const E: f64 = std::f64::consts::E;

fn h1gap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h1gap")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = h1gap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rows(dir: &Path, file: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(dir.join(file)).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn harmonic(n: u64) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["simulate", "--paths", "10", "--seed", "11", "--out", a.to_str().unwrap()]);
    ok(&["simulate", "--paths", "10", "--seed", "11", "--workers", "3", "--out", b.to_str().unwrap()]);
    let raw = std::fs::read(a.join("raw.csv")).unwrap();
    assert_eq!(raw, std::fs::read(b.join("raw.csv")).unwrap());
    let (header, body) = rows(&a, "raw.csv");
    assert_eq!(header.join(","), "path_id,seed,sup,terminal,qv,absorbed");
    assert_eq!(body.len(), 10);
    for r in &body {
        assert!(r[2].parse::<f64>().unwrap() >= 1.0);
    }
    assert!(a.join("manifest.json").exists());
}

#[test]
fn dump_paths_writes_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("p");
    ok(&["simulate", "--paths", "3", "--dump-paths", "--out", d.to_str().unwrap()]);
    let (header, body) = rows(&d, "paths.csv");
    assert_eq!(header.join(","), "path_id,index,time,value");
    assert!(body.iter().any(|r| r[0] == "2"));
    assert!(body.iter().filter(|r| r[1] == "0").all(|r| r[2] == "0" && r[3] == "1"));
}

#[test]
fn invalid_step_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"grid": {"horizon": 10.0, "step": 0.0}}"#);
    let out = h1gap(&["simulate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(78));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.step"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"n_pathz": 3}"#);
    assert!(!h1gap(&["simulate", "--config", &cfg]).status.success());
}

#[test]
fn construct_rows_follow_the_stopping_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("c");
    ok(&["simulate", "--paths", "200", "--seed", "4", "--out", d.to_str().unwrap()]);
    ok(&["construct", "--paths", "200", "--seed", "4", "--out", d.to_str().unwrap()]);
    let (rh, raw) = rows(&d, "raw.csv");
    let (h, body) = rows(&d, "stopped.csv");
    assert_eq!(h.join(","), "path_id,y_exact,y_log2,hit,sigma_index,stopped_sup,stopped_terminal,stopped_qv");
    assert_eq!(body.len(), 200);
    let mut hits = 0;
    for (r, raw) in body.iter().zip(&raw) {
        assert_eq!(r[0], raw[0]);
        assert_ne!(r[col(&h, "y_exact")].is_empty(), r[col(&h, "y_log2")].is_empty());
        if r[col(&h, "hit")] == "true" {
            hits += 1;
            assert_eq!(r[col(&h, "stopped_terminal")], r[col(&h, "y_exact")]);
            assert_eq!(r[col(&h, "stopped_sup")], r[col(&h, "y_exact")]);
        } else {
            assert_eq!(r[col(&h, "stopped_sup")], raw[col(&rh, "sup")]);
            assert!(r[col(&h, "sigma_index")].is_empty());
        }
    }
    assert!(hits > 0 && hits < 200);
}

#[test]
fn construct_on_the_jump_model_overshoots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"model": "double-or-nothing", "n_paths": 300, "max_depth": 20}"#);
    let d = tmp.path().join("j");
    ok(&["construct", "--config", &cfg, "--out", d.to_str().unwrap()]);
    let (h, body) = rows(&d, "stopped.csv");
    let hit: Vec<_> = body.iter().filter(|r| r[col(&h, "hit")] == "true").collect();
    assert!(!hit.is_empty());
    for r in hit {
        let y: f64 = r[col(&h, "y_exact")].parse().unwrap();
        let t: f64 = r[col(&h, "stopped_terminal")].parse().unwrap();
        assert!(t > y && t <= 2.0 * y, "{r:?}");
        assert_eq!(t.log2().fract(), 0.0);
    }
}

#[test]
fn diagnose_tables_carry_analytic_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["diagnose", "--paths", "300", "--seed", "2", "--out", d.to_str().unwrap()]);
    let (h, tails) = rows(&d, "tails.csv");
    assert_eq!(h.join(","), "level,estimate,ci_low,ci_high,analytic,bias_budget");
    for r in &tails {
        let n: u64 = r[0].parse().unwrap();
        let analytic: f64 = r[col(&h, "analytic")].parse().unwrap();
        let expected = 1.0 / (n as f64 * (E + harmonic(n)).ln());
        assert!((analytic - expected).abs() < 1e-12 * expected, "n={n}");
        let lo: f64 = r[col(&h, "ci_low")].parse().unwrap();
        let est: f64 = r[col(&h, "estimate")].parse().unwrap();
        let hi: f64 = r[col(&h, "ci_high")].parse().unwrap();
        assert!(lo <= est && est <= hi);
    }
    let (h, series) = rows(&d, "series.csv");
    assert_eq!(h.join(","), "mode,m,s_m,bound");
    let analytic: Vec<_> = series.iter().filter(|r| r[0] == "analytic").collect();
    assert!(!analytic.is_empty());
    for r in analytic {
        let s: f64 = r[2].parse().unwrap();
        let b: f64 = r[3].parse().unwrap();
        assert!(s >= b - 1e-12);
    }
    for f in ["tails_raw.csv", "ui.csv", "h1.csv", "manifest.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
}

#[test]
fn oracle_queries() {
    assert_eq!(ok(&["oracle", "inverse-bessel", "c", "1"]).trim(), "1.31326168752");
    assert_eq!(ok(&["oracle", "inverse-bessel", "sup_tail", "4"]).trim(), "0.25");
    assert_eq!(ok(&["oracle", "double-or-nothing", "sup_tail", "3"]).trim(), "0.25");
    assert_eq!(ok(&["oracle", "inverse-bessel", "y_pmf", "1"]).trim(), "0.238537140385");
    assert_eq!(ok(&["oracle", "inverse-bessel", "stopped_tail", "1"]).trim(), "0.761462859615");
    let e = ok(&["oracle", "double-or-nothing", "enumeration", "2"]);
    assert_eq!(e, "doublings,prob,sup,terminal\n0,0.5,1,0\n1,0.25,2,0\n2,0.25,4,4\n");
}

#[test]
fn unknown_oracle_query_is_a_usage_error() {
    let out = h1gap(&["oracle", "inverse-bessel", "nonsense", "1"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn miscoded_c0_fails_the_y_law() {
    let tmp = tempfile::tempdir().unwrap();
    let out = h1gap(&[
        "verify", "--quick", "--inject-fault", "miscoded-c0", "--out", tmp.path().join("v").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("criterion 2 Y-distribution law: FAIL"), "{text}");
}
