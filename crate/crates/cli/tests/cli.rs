use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qnetsec_core::report::{without_wall_clock, REPORT_SCHEMA};
use serde_json::Value;

fn qnetsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnetsec")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn honest_run_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qnetsec(&["run", "--scenario", &scenario("honest_chain"), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let report = read_json(&dir.path().join("report.json"));
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    assert!(jsonschema::validator_for(&schema).unwrap().is_valid(&report));
    assert_eq!(report["cia_ledger"]["availability"]["delivered_pairs"], 100);
}

#[test]
fn repeater_with_three_links_fails_validation_with_rule_id() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{
        "nodes": [
            {"id": "A", "kind": "ENode"}, {"id": "B", "kind": "ENode"},
            {"id": "C", "kind": "ENode"}, {"id": "R", "kind": "RNode"}
        ],
        "links": [
            {"id": "A-R", "a": "A", "b": "R", "length_km": 1},
            {"id": "B-R", "a": "B", "b": "R", "length_km": 1},
            {"id": "C-R", "a": "C", "b": "R", "length_km": 1}
        ]
    }"#,
    )
    .unwrap();
    for args in [vec!["validate", "--scenario", path(&bad)], vec!["run", "--scenario", path(&bad), "--out", path(dir.path())]] {
        let out = qnetsec(&args);
        assert_eq!(out.status.code(), Some(2));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("degree.rnode"), "{stderr}");
    }
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn seed_sweep_writes_one_report_per_seed_and_an_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = qnetsec(&["run", "--scenario", &scenario("honest_chain"), "--seeds", "1..32", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in 1..=32 {
        let r = read_json(&dir.path().join(format!("seed-{seed}/report.json")));
        assert_eq!(r["seed"], seed);
        assert!(dir.path().join(format!("seed-{seed}/events.csv")).exists());
    }
    let agg = read_json(&dir.path().join("aggregate.json"));
    assert_eq!(agg["seeds"].as_array().unwrap().len(), 32);
    let tp = &agg["throughput_hz"];
    assert_eq!(tp["n"], 32);
    let ci = tp["ci95"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= tp["mean"].as_f64().unwrap());
}

#[test]
fn diff_against_itself_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    qnetsec(&["run", "--scenario", &scenario("qdos"), "--out", path(dir.path())]);
    let r = dir.path().join("report.json");
    let out = qnetsec(&["diff", path(&r), path(&r)]);
    assert_eq!(out.status.code(), Some(0));
    let d: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(d["ledger"].as_array().unwrap().is_empty());
    assert!(d["connections"].as_array().unwrap().is_empty());
}

#[test]
fn diff_across_scenarios_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    qnetsec(&["run", "--scenario", &scenario("qdos_baseline"), "--out", path(&a)]);
    qnetsec(&["run", "--scenario", &scenario("qdos"), "--out", path(&b)]);
    let (ra, rb) = (a.join("report.json"), b.join("report.json"));
    let out = qnetsec(&["diff", path(&ra), path(&rb)]);
    assert_eq!(out.status.code(), Some(2));
    let out = qnetsec(&["diff", path(&ra), path(&rb), "--force"]);
    assert_eq!(out.status.code(), Some(0));
    let d: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(d["same_scenario"], false);
    assert!(!d["ledger"].as_array().unwrap().is_empty());
}

#[test]
fn repeated_runs_match_apart_from_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = qnetsec(&["run", "--scenario", &scenario("bbm92_intercept"), "--seed", "7", "--out", path(d)]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("events.csv")).unwrap(), fs::read(b.join("events.csv")).unwrap());
    let (ja, jb) = (fs::read_to_string(a.join("report.json")).unwrap(), fs::read_to_string(b.join("report.json")).unwrap());
    assert_eq!(without_wall_clock(&ja), without_wall_clock(&jb));
}

#[test]
fn baseline_fills_the_rate_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    qnetsec(&["run", "--scenario", &scenario("qdos_baseline"), "--out", path(&a)]);
    let base = a.join("report.json");
    let out = qnetsec(&["run", "--scenario", &scenario("qdos"), "--out", path(&b), "--baseline", path(&base)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&b.join("report.json"));
    let ratio = r["cia_ledger"]["availability"]["rate_ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 1.0, "{ratio}");
}

#[test]
fn cert_scope_flag_changes_the_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    qnetsec(&["run", "--scenario", &scenario("honest_chain"), "--out", path(&a)]);
    qnetsec(&["run", "--scenario", &scenario("honest_chain"), "--out", path(&b), "--cert-scope", "link"]);
    let (ra, rb) = (read_json(&a.join("report.json")), read_json(&b.join("report.json")));
    assert_ne!(ra["fingerprint"], rb["fingerprint"]);
}

#[test]
fn dump_output_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = qnetsec(&["dump", "--scenario", &scenario("link_down")]);
    assert_eq!(out.status.code(), Some(0));
    let p = dir.path().join("dumped.json");
    fs::write(&p, &out.stdout).unwrap();
    let v = qnetsec(&["validate", "--scenario", path(&p)]);
    assert_eq!(v.status.code(), Some(0));
    let orig = qnetsec(&["validate", "--scenario", &scenario("link_down")]);
    assert_eq!(v.stdout, orig.stdout);
}
