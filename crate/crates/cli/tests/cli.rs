use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eternal"));
    c.env_remove("ETERNAL_OUT_DIR");
    c
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/heat_interval.json")
}

fn coarse(kind: &str) -> Value {
    json!({
        "domain": {"interval": ["-pi/2", "pi/2"]},
        "h": "pi/20",
        "coefficients": {"a": [["1"]], "b": ["0"], "c": "0", "lambda": 1, "Lambda": 1},
        "source": "cos(y)",
        "dt": 0.01,
        "kind": kind,
        "params": {"n_list": [4, 8], "half_width": 1, "csv_stride": 10},
        "seed": 5,
        "regress": {"fields": {"DecayReport.delta": 0.05}}
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(config: &Path, out: &Path) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bundled_suite_passes() {
    let tmp = TempDir::new().unwrap();
    let o = bin()
        .arg("run")
        .arg(bundled())
        .arg("--out")
        .arg(tmp.path())
        .arg("--workers")
        .arg("2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let r = read_json(&tmp.path().join("result.json"));
    assert_eq!(r["passed"], json!(true));
    let kinds: Vec<&String> = r["experiments"].as_object().unwrap().keys().collect();
    assert_eq!(kinds.len(), 7);
    assert_eq!(r["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(tmp.path().join("timing.json").is_file());
}

#[test]
fn negative_c_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut v = coarse("eternal");
    v["coefficients"]["c"] = json!("-1");
    let o = run(&write_config(tmp.path(), "c.json", &v), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c >= 0"), "{}", stderr(&o));
}

#[test]
fn zero_dt_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut v = coarse("eternal");
    v["dt"] = json!(0);
    let o = run(&write_config(tmp.path(), "dt.json", &v), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dt"));
}

#[test]
fn missing_required_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut v = coarse("exhaustion");
    v["params"] = json!({});
    let o = run(&write_config(tmp.path(), "n.json", &v), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_list"));
}

#[test]
fn failed_check_exits_one() {
    let tmp = TempDir::new().unwrap();
    let mut v = coarse("rates");
    v["params"]["tolerances"] = json!({"decay": 1e-12});
    let o = run(&write_config(tmp.path(), "fail.json", &v), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL rates"));
    assert!(tmp.path().join("out/result.json").is_file());
}

#[test]
fn solver_error_exits_three() {
    let tmp = TempDir::new().unwrap();
    let mut v = coarse("eternal");
    v["coefficients"]["c"] = json!("1 + 0.5*sin(3*t)");
    v["coefficients"]["Lambda"] = json!(2);
    v["coefficients"]["period"] = json!(2.0943951023931953);
    let o = run(&write_config(tmp.path(), "period.json", &v), &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    let r = read_json(&tmp.path().join("out/result.json"));
    assert!(r["experiments"]["eternal"]["error"].as_str().unwrap().contains("period"));
}

#[test]
fn runs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "suite.json", &coarse("suite"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&cfg, &a).status.code(), Some(0));
    assert_eq!(run(&cfg, &b).status.code(), Some(0));
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name != "timing.json" {
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{name:?}"
            );
        }
    }
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.json", &coarse("eternal"));
    let out = tmp.path().join("from_env");
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .env("ETERNAL_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("result.json").is_file());
    assert!(out.join("eternal_trace.csv").is_file());
}

fn regress(golden: &Path, fresh: &Path) -> Output {
    bin().arg("regress").arg(golden).arg(fresh).output().unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

#[test]
fn regress_reports_drift_and_structure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "rates.json", &coarse("rates"));
    let golden = tmp.path().join("golden");
    assert_eq!(run(&cfg, &golden).status.code(), Some(0));

    let same = tmp.path().join("same");
    copy_dir(&golden, &same);
    let o = regress(&golden, &same);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "no drift");

    let drifted = tmp.path().join("drifted");
    copy_dir(&golden, &drifted);
    let mut r = read_json(&drifted.join("result.json"));
    let delta = &mut r["experiments"]["rates"]["reports"]["DecayReport"]["delta"];
    *delta = json!(delta.as_f64().unwrap() * 1.1);
    std::fs::write(drifted.join("result.json"), serde_json::to_string_pretty(&r).unwrap()).unwrap();
    let o = regress(&golden, &drifted);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("DecayReport.delta"), "{}", stdout(&o));

    let short = tmp.path().join("short");
    copy_dir(&golden, &short);
    let csv = short.join("rates_profile.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let o = regress(&golden, &short);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("structural rates_profile.csv: row count"), "{}", stdout(&o));

    let o = regress(&tmp.path().join("nowhere"), &golden);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing golden"));
}

#[test]
fn schema_is_json() {
    let o = bin().arg("schema").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["title"], json!("ExperimentConfig"));
    assert!(v["properties"]["kind"]["enum"].as_array().unwrap().len() == 8);
}

#[test]
fn help_documents_environment_override() {
    let o = bin().args(["run", "--help"]).output().unwrap();
    assert!(stdout(&o).contains("ETERNAL_OUT_DIR"));
}
