use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const CORPUS: &str = r#"{
  "n_load_profiles": 2,
  "n_fault_cases": 4,
  "duration_s": 20,
  "fault": { "start_s": 5, "end_s": 15 }
}"#;

fn hif(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hif"))
        .args(args)
        .current_dir(dir)
        .env_remove("HIF_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}{}", o.status.code(), stdout(&o), stderr(&o));
    o
}

/// Corpus and a quickly trained model shared by the tests of this file.
fn fixture() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("corpus.json"), CORPUS).unwrap();
        ok(hif(&["simulate", "--config", "corpus.json", "--out", "corpus"], dir.path()));
        ok(hif(
            &["train", "corpus/manifest.json", "--epochs", "10", "--seed", "4", "--out", "model.json"],
            dir.path(),
        ));
        dir
    })
    .path()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    out.sort();
    out
}

#[test]
fn invalid_fault_window_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"fault": {"start_s": 100, "end_s": 50}}"#).unwrap();
    let o = hif(&["simulate", "--config", "bad.json", "--out", "c"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("end_s"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = hif(&["train", "x.csv", "--bogus"], Path::new("."));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_counts_and_manifest() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"duration_s": 1, "fault": {"start_s": 0.25, "end_s": 0.75}}"#).unwrap();
    ok(hif(&["simulate", "--config", "c.json", "--out", "c"], dir.path()));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("c/manifest.json")).unwrap()).unwrap();
    let entries = m["entries"].as_array().unwrap();
    let count = |kind: &str| entries.iter().filter(|e| e["kind"] == kind).count();
    assert_eq!((count("load"), count("fault")), (4, 12));
    for e in entries {
        assert!(e["seed"].is_u64());
        assert!(dir.path().join("c").join(e["file"].as_str().unwrap()).is_file());
        assert!(dir.path().join("c").join(e["meta"].as_str().unwrap()).is_file());
    }
    // csv + meta per recording, plus the manifest
    assert_eq!(files(&dir.path().join("c")).len(), 33);
}

#[test]
fn simulate_is_reproducible_and_seed_overridable() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), CORPUS).unwrap();
    ok(hif(&["simulate", "--config", "c.json", "--out", "a"], dir.path()));
    ok(hif(&["simulate", "--config", "c.json", "--out", "b"], dir.path()));
    assert_eq!(files(&dir.path().join("a")), files(&dir.path().join("b")));

    let o = Command::new(env!("CARGO_BIN_EXE_hif"))
        .args(["simulate", "--config", "c.json", "--out", "s"])
        .current_dir(dir.path())
        .env("HIF_SEED", "99")
        .output()
        .unwrap();
    ok(o);
    let m = fs::read_to_string(dir.path().join("s/manifest.json")).unwrap();
    assert!(m.contains("\"base_seed\": 99"), "{m}");
    assert_ne!(
        fs::read(dir.path().join("a/load_00.csv")).unwrap(),
        fs::read(dir.path().join("s/load_00.csv")).unwrap()
    );
}

#[test]
fn train_is_deterministic_and_reports() {
    let root = fixture();
    let o = ok(hif(
        &["train", "corpus/manifest.json", "--epochs", "10", "--seed", "4", "--out", "again.json"],
        root,
    ));
    let text = stdout(&o);
    for key in ["final loss", "l = ", "g = ", "h = ", "phi"] {
        assert!(text.contains(key), "missing {key:?} in\n{text}");
    }
    assert_eq!(fs::read(root.join("model.json")).unwrap(), fs::read(root.join("again.json")).unwrap());
}

#[test]
fn detect_writes_traces_and_exits_zero() {
    let root = fixture();
    let o = ok(hif(&["detect", "model.json", "corpus/load_00.csv", "--out", "det_load"], root));
    let text = stdout(&o);
    assert_eq!(text.matches("no trip").count(), 3, "{text}");
    for phase in ["A", "B", "C"] {
        let trace = fs::read_to_string(root.join(format!("det_load/trace_{phase}.csv"))).unwrap();
        // header plus one row per 60 Hz cycle of 20 s
        assert_eq!(trace.lines().count(), 1 + 1200);
        assert!(trace.starts_with("cycle_index,phi,limit,above,counter,trip\n"));
    }
    assert!(root.join("det_load/events.jsonl").is_file());

    // a trip is data, not a failure
    let o = ok(hif(&["detect", "model.json", "corpus/fault_03.csv", "--threshold", "1", "--out", "det_fault"], root));
    assert!(stdout(&o).contains("trip at"), "{}", stdout(&o));
}

#[test]
fn detect_rejects_mismatched_ts() {
    let root = fixture();
    fs::write(root.join("ts160.json"), r#"{"n_load_profiles": 1, "n_fault_cases": 0, "duration_s": 10, "ts": 160}"#).unwrap();
    ok(hif(&["simulate", "--config", "ts160.json", "--out", "corpus160"], root));
    // training itself refuses recordings of another cycle length
    let o = hif(&["train", "corpus/load_00.csv", "--ts", "160", "--out", "m160.json"], root);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    ok(hif(
        &["train", "corpus160/load_00.csv", "--ts", "160", "--epochs", "1", "--out", "m160.json"],
        root,
    ));
    let o = hif(&["detect", "m160.json", "corpus/load_01.csv", "--out", "x"], root);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("ts"));
}

#[test]
fn corrupt_model_is_rejected() {
    let root = fixture();
    let mut model: serde_json::Value = serde_json::from_slice(&fs::read(root.join("model.json")).unwrap()).unwrap();
    model["models"]["monitor"]["alpha"] = serde_json::json!(0.5);
    fs::write(root.join("corrupt.json"), serde_json::to_vec(&model).unwrap()).unwrap();
    let o = hif(&["detect", "corrupt.json", "corpus/load_00.csv", "--out", "x"], root);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!root.join("x").exists());
}

#[test]
fn evaluate_prints_table_and_report() {
    let root = fixture();
    let o = ok(hif(&["evaluate", "model.json", "corpus/manifest.json", "--report", "report.json"], root));
    let text = stdout(&o);
    let header = text.lines().find(|l| l.contains("Acc")).unwrap();
    let cols: Vec<&str> = header.split('|').skip(1).map(str::trim).collect();
    assert_eq!(cols, ["Acc", "Sec", "Dep", "Saf", "Sen"]);

    let report: serde_json::Value = serde_json::from_slice(&fs::read(root.join("report.json")).unwrap()).unwrap();
    let c = &report["counts"];
    let total: u64 = ["tp", "tn", "fp", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, 6);
    assert_eq!(report["cases"].as_array().unwrap().len(), 6);
}

#[test]
fn never_tripping_detector_is_secure_but_not_dependable() {
    let root = fixture();
    ok(hif(
        &["evaluate", "model.json", "corpus/manifest.json", "--threshold", "100000", "--report", "never.json"],
        root,
    ));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(root.join("never.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["security"], 100.0);
    assert_eq!(report["metrics"]["dependability"], 0.0);
}

#[test]
fn evaluate_lists_missing_recordings() {
    let root = fixture();
    let dir = TempDir::new().unwrap();
    let manifest = fs::read_to_string(root.join("corpus/manifest.json")).unwrap();
    fs::write(dir.path().join("manifest.json"), manifest).unwrap();
    let model = root.join("model.json");
    let o = hif(&["evaluate", model.to_str().unwrap(), "manifest.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("load_00.csv") && err.contains("fault_03.csv"), "{err}");
}
