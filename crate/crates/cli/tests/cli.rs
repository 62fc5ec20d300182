use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pettis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pettis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write_fn(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    let mut full = vec!["construct"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--out", &p]);
    let out = pettis(&full);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn verify_exact_lemma_passes() {
    let out = pettis(&["verify", "--lemma", "3.2", "--kmax", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["status"], "pass");
    assert_eq!(v["params"]["kmax"], 10);
}

#[test]
fn usage_errors_exit_2() {
    let out = pettis(&["verify", "--kmax", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(pettis(&["verify", "--lemma", "0.0"]).status.code(), Some(2));
    assert_eq!(pettis(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pettis(&["verify", "--lemma", "3.2", "--backend", "l"]).status.code(), Some(2));
    assert_eq!(pettis(&["integrate", "--f", "/nonexistent.json", "--at", "1/2"]).status.code(), Some(2));
}

#[test]
fn infeasible_blowup_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fn(dir.path(), "f.json", &["--ts", "1/3", "--kmax", "20"]);
    let out = pettis(&["blowup", "--f", &f, "--x", "0", "--M", "50"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["status"], "infeasible");
    assert!(v["reason"].as_str().unwrap().contains("needs kmax >= "));
}

#[test]
fn blowup_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fn(
        dir.path(),
        "f.json",
        &["--ts", "1/3,1/2,2/3", "--weights", "1,1/4,-1/8", "--kmax", "40"],
    );
    let args = ["blowup", "--f", &f, "--x", "1/3", "--M", "50", "--seed", "7"];
    let a = pettis(&args);
    let b = pettis(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["status"], "pass");
    assert_eq!(v["samples"].as_array().unwrap().len(), 20);
}

#[test]
fn lemma_reports_are_byte_identical() {
    let args = ["verify", "--lemma", "4.2", "--backend", "l4", "--seed", "5"];
    let a = pettis(&args);
    let b = pettis(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn table_csv() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fn(dir.path(), "f.json", &["--ts", "1/3", "--kmax", "20"]);
    let out = pettis(&["table", "--f", &f, "--x", "0", "--hmin", "2^-12", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,h,quot_sq_lo,quot_sq_hi,quot_sq_exact");
    assert_eq!(lines.len(), 13);
    assert!(lines[12].starts_with("0/1,1/4096,"));
}

#[test]
fn table_flips_h_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fn(dir.path(), "f.json", &["--ts", "1/3", "--kmax", "10"]);
    let out = pettis(&["table", "--f", &f, "--x", "1", "--hmin", "1/8"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out);
    assert!(rows.as_array().unwrap().iter().all(|r| r["h"].as_str().unwrap().starts_with('-')));
}

#[test]
fn family_check() {
    let out = pettis(&["family", "--check-ad", "--ts", "1/3,1/2,2/3", "--depth", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["collision_horizon"], 6);
    assert_eq!(pettis(&["family", "--ts", "3/2"]).status.code(), Some(2));
}

#[test]
fn integrate_and_construct() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fn(dir.path(), "f.json", &["--ts", "1/3", "--kmax", "2"]);
    let out = pettis(&["integrate", "--f", &f, "--at", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["norm_sq"], "49/36");
    let out = pettis(&["construct", "--selector", "diagonal", "--kmax", "3", "--restrict", "01"]);
    assert_eq!(json(&out)["restriction"], "01");
    let out = pettis(&["construct", "--audit", "0110", "--kmax", "6"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["violations"].as_array().unwrap().is_empty());
    let out = pettis(&["construct", "--carve", "01:1", "--kmax", "3"]);
    assert_eq!(json(&out)["measure"], "1/3072");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = pettis(&["verify", "--lemma", "3.1-1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["lemma"], "3.1-1");
}

#[test]
fn params_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, r#"{"weights": ["1", "1/2"], "slopes": ["1/3", "1/2"], "samples": 5}"#).unwrap();
    let out = pettis(&["verify", "--lemma", "3.3", "--params", path.to_str().unwrap(), "--kmax", "8"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["params"]["weights"][1], "1/2");
}
