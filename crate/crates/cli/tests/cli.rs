use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const HOM: &str = r#"{"d":2,"kappa":0.25,"model":"homogeneous","model_params":{"a":0.25}}"#;

fn rwre() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rwre"))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(body).unwrap()).unwrap();
    p
}

fn oracle_job(id: &str, side: usize) -> Value {
    json!({ "id": id, "check": "kernel_oracle", "geometry": { "side": side, "ck_side": 8 } })
}

fn config(out: &str, jobs: Vec<Value>) -> Value {
    json!({ "env": serde_json::from_str::<Value>(HOM).unwrap(), "seed": 3, "output_dir": out, "jobs": jobs })
}

#[test]
fn empty_job_list_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config("out", vec![]));
    let o = rwre().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out").is_dir());
}

#[test]
fn malformed_config_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, "{\n  \"env\": {\"d\": 2,,}\n}").unwrap();
    let o = rwre().arg("run").arg(&p).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("column"), "{err}");
}

#[test]
fn unknown_check_and_duplicate_ids_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "a.json", &config("o", vec![json!({ "id": "x", "check": "nope" })]));
    assert_eq!(code(&rwre().arg("run").arg(&bad).output().unwrap()), 2);
    let dup = write_config(tmp.path(), "b.json", &config("o", vec![oracle_job("x", 32), oracle_job("x", 32)]));
    assert_eq!(code(&rwre().arg("run").arg(&dup).output().unwrap()), 2);
}

#[test]
fn run_writes_reports_and_exit_code_tracks_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write_config(tmp.path(), "ok.json", &config("ok", vec![oracle_job("oracle", 32)]));
    let o = rwre().arg("run").arg(&ok).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("PASS oracle"));
    let dir = tmp.path().join("ok");
    for f in ["oracle.json", "oracle.metrics.csv", "oracle.runtime.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], json!(true));
    assert!(report.get("runtime_s").is_none());
    assert_eq!(report["env"]["seed"], json!(3));

    let mixed = write_config(tmp.path(), "mixed.json", &config("mixed", vec![oracle_job("good", 32), oracle_job("coarse", 16)]));
    let o = rwre().arg("run").arg(&mixed).output().unwrap();
    assert_eq!(code(&o), 1);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASS good") && text.contains("FAIL coarse"), "{text}");
}

#[test]
fn reports_are_write_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config("out", vec![oracle_job("oracle", 32)]));
    assert_eq!(code(&rwre().arg("run").arg(&cfg).output().unwrap()), 0);
    let before = std::fs::read(tmp.path().join("out/oracle.json")).unwrap();
    let o = rwre().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("write-once"));
    assert_eq!(std::fs::read(tmp.path().join("out/oracle.json")).unwrap(), before);

    let out = tmp.path().join("v.json");
    let verify = |o: &Path| rwre().args(["verify", "kernel_oracle", "--env", HOM, "--geometry", r#"{"side":32,"ck_side":8}"#, "--out"]).arg(o).output().unwrap();
    assert_eq!(code(&verify(&out)), 0);
    assert_eq!(code(&verify(&out)), 1);
}

#[test]
fn runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let jobs = vec![
        oracle_job("oracle", 32),
        json!({ "id": "clt", "check": "clt", "geometry": { "ensemble": 1, "n_samples": 2000, "side": 16, "window": 8.0 } }),
    ];
    let mut texts = Vec::new();
    for out in ["a", "b"] {
        let mut cfg = config(out, jobs.clone());
        cfg["env"] = json!({ "d": 2, "kappa": 0.25, "model": "iid_checkerboard" });
        let p = write_config(tmp.path(), &format!("{out}.json"), &cfg);
        let o = rwre().arg("run").arg(&p).env("RWRE_THREADS", "2").output().unwrap();
        assert_ne!(code(&o), 2);
        let dir = tmp.path().join(out);
        texts.push((std::fs::read(dir.join("oracle.json")).unwrap(), std::fs::read(dir.join("clt.json")).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config("out", vec![]));
    for v in ["0", "many"] {
        let o = rwre().arg("run").arg(&cfg).env("RWRE_THREADS", v).output().unwrap();
        assert_eq!(code(&o), 2, "RWRE_THREADS={v}");
    }
}

#[test]
fn aggregate_keeps_latest_report_per_id() {
    let tmp = tempfile::tempdir().unwrap();
    let one = write_config(tmp.path(), "one.json", &config("runs/one", vec![oracle_job("oracle", 16)]));
    assert_eq!(code(&rwre().arg("run").arg(&one).output().unwrap()), 1);
    std::thread::sleep(std::time::Duration::from_millis(50));
    let two = write_config(tmp.path(), "two.json", &config("runs/two", vec![oracle_job("oracle", 32)]));
    assert_eq!(code(&rwre().arg("run").arg(&two).output().unwrap()), 0);

    let runs = tmp.path().join("runs");
    let o = rwre().arg("aggregate").arg(&runs).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(runs.join("summary.json")).unwrap()).unwrap();
    let rows = summary["reports"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["pass"], json!(true));
    assert!(rows[0]["runtime_s"].as_f64().is_some());
    assert_eq!(summary["all_pass"], json!(true));
    let md = std::fs::read_to_string(runs.join("summary.md")).unwrap();
    assert_eq!(md.lines().count(), 3);

    // a second pass ignores its own summary
    let o = rwre().arg("aggregate").arg(&runs).output().unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn aggregate_of_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&rwre().arg("aggregate").arg(tmp.path()).output().unwrap()), 2);
}

#[test]
fn simulate_and_kernel_write_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("k.csv");
    let summary = tmp.path().join("k.json");
    let o = rwre()
        .args(["kernel", "--env", HOM, "--time", "2", "--box", "12", "--out"])
        .arg(&csv)
        .arg("--summary")
        .arg(&summary)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = std::fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "x0,x1,p");
    assert_eq!(lines.len(), 1 + 144);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!((s["mass"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let o = rwre().args(["kernel", "--env", HOM, "--time", "2", "--radius", "3"]).output().unwrap();
    assert_eq!(code(&o), 2);

    let o = rwre().args(["simulate", "--env", HOM, "--time", "1", "--paths", "500", "--mc-seed", "4"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let again = rwre().args(["simulate", "--env", HOM, "--time", "1", "--paths", "500", "--mc-seed", "4"]).output().unwrap();
    assert_eq!(o.stdout, again.stdout);
    let total: f64 = String::from_utf8_lossy(&o.stdout)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}
