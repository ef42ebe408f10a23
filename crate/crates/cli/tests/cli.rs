use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn levyheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyheat")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

fn small_config(claims: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "kernel": {"kind": "brownian", "kappa": 1.0},
        "u0": {"atoms": [[0.0, 1.0]]},
        "sigma": {"kind": "linear", "lambda": 1.0},
        "grid": {"dt": 0.0078125, "dx": 0.1875, "L": 6.0, "t_end": 0.5},
        "seeds": {"first": 0, "count": 64},
        "ks": [2.0, 4.0],
        "claims": claims
    })
}

#[test]
fn kernel_query_prints_functionals() {
    let out = levyheat(&["kernel", r#"{"kernel":{"kind":"brownian","kappa":1},"beta":[1,4],"k":[2,3],"lip":1}"#]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["theta"].as_f64().unwrap() - std::f64::consts::SQRT_2).abs() < 1e-6);
    assert!((v["gamma"][0].as_f64().unwrap() - 16.0).abs() < 1e-6);
    assert!((v["upsilon"][0].as_f64().unwrap() - 0.5).abs() < 1e-8);
}

#[test]
fn divergent_kernel_reports_error_field() {
    let out = levyheat(&["kernel", r#"{"kernel":{"kind":"stable","alpha":1.0,"kappa":1}}"#]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"].as_str().unwrap().contains("divergent resolvent"));
}

#[test]
fn empty_claims_exit_zero_with_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small_config(serde_json::json!([])));
    let out_dir = dir.path().join("run");
    let out = levyheat(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("manifest.json")]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 64);
}

#[test]
fn unknown_kernel_kind_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = small_config(serde_json::json!([]));
    body["kernel"] = serde_json::json!({"kind": "meixner"});
    let cfg = write_config(dir.path(), body);
    let out = levyheat(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn unknown_claim_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small_config(serde_json::json!(["chaos"])));
    assert_eq!(levyheat(&["verify", cfg.to_str().unwrap()]).status.code(), Some(64));
    assert_eq!(levyheat(&["run", "/nonexistent/config.json"]).status.code(), Some(74));
    assert_eq!(levyheat(&["report", dir.path().to_str().unwrap()]).status.code(), Some(74));
}

#[test]
fn verify_and_report_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), small_config(serde_json::json!(["lemma_pp", "h1_bound", "exist_unique_bound"])));
    let out = levyheat(&["verify", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("claim_id,lhs,rhs,std_error,pass\n"));
    assert!(text.lines().count() > 26);
    let expected = if text.lines().skip(1).all(|l| l.ends_with(",true")) { 0 } else { 2 };
    assert_eq!(out.status.code(), Some(expected));

    let run_dir = dir.path().join("run");
    levyheat(&["run", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    let out = levyheat(&["report", run_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,x,k,estimate,bound\n"));
    assert_eq!(text.lines().count(), 1 + 20 * 2);
}

#[test]
fn convolution_table_orders_triples() {
    let out = levyheat(&["verify", "convolution"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kernel,t,lower,mid,upper,pass"));
    assert_eq!(lines.filter(|l| l.ends_with(",true")).count(), 26);
}
