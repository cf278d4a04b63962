use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn improver(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_improver"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn error_kind(o: &Output) -> String {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("error line is JSON");
    v["error"].as_str().unwrap().to_string()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("golden").join(name)).unwrap()
}

#[test]
fn version_lists_schemas() {
    let out = improver(&["--version"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for schema in ["improver2-trace/1", "improver2-index/1", "improver2-reservoir/1", "improver2-manifest/1"] {
        assert!(text.contains(schema), "{text}");
    }
}

#[test]
fn score_length_on_showcase_originals() {
    let traces = fixtures().join("showcase/originals.jsonl");
    let out = improver(&["score", "--metric", "length", "--traces", path(&traces)]);
    assert!(out.status.success());
    let values: Vec<(String, f64)> = stdout(&out)
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["theoremName"].as_str().unwrap().to_string(), v["metricValue"].as_f64().unwrap())
        })
        .collect();
    assert!(values.contains(&("mem_cross_iff".into(), -10.0)));
    assert!(values.contains(&("summerCommute_jacobi_ofCrAnListF".into(), -43.0)));
}

#[test]
fn score_dependencies_reports_local_lemmas() {
    let dir = fixtures().join("showcase");
    let out = improver(&[
        "score",
        "--metric",
        "dependencies",
        "--traces",
        path(&dir.join("originals.jsonl")),
        "--index",
        path(&dir.join("index.json")),
    ]);
    assert!(out.status.success());
    let row = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["theoremName"] == "mem_cross_iff")
        .unwrap();
    assert_eq!(row["metricValue"], -2.0);
    let local = row["report"]["local"].as_array().unwrap();
    assert!(local.iter().any(|n| n == "op_inj"));
}

#[test]
fn tree_matches_golden_dot() {
    let traces = fixtures().join("showcase/originals.jsonl");
    let out = improver(&["tree", "--traces", path(&traces), "--theorem", "KD5_weakerThan_KD45"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), golden("KD5_weakerThan_KD45.dot"));
}

#[test]
fn annotate_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = fixtures().join("showcase/originals.jsonl");
    let out = improver(&["annotate", "--traces", path(&traces), "--out", path(tmp.path())]);
    assert!(out.status.success());
    for name in ["KD5_weakerThan_KD45.lean", "mem_cross_iff.lean"] {
        let got = std::fs::read_to_string(tmp.path().join(name)).unwrap();
        assert_eq!(got, golden(name), "{name}");
    }
    assert!(!tmp.path().join("mem_cross_iff.informalize.txt").exists());
}

#[test]
fn annotate_writes_informalization_prompts_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = fixtures().join("showcase/originals.jsonl");
    let out = improver(&["annotate", "--traces", path(&traces), "--out", path(tmp.path()), "--informalize"]);
    assert!(out.status.success());
    let prompt = std::fs::read_to_string(tmp.path().join("mem_cross_iff.informalize.txt")).unwrap();
    assert!(prompt.contains("<FORMAL>"));
    assert!(prompt.contains("theorem mem_cross_iff"));
}

#[test]
fn slice_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures().join("showcase");
    let out = improver(&[
        "slice",
        "--index",
        path(&dir.join("index.json")),
        "--traces",
        path(&dir.join("originals.jsonl")),
        "--depth",
        "2",
        "--max-items",
        "16",
        "--out",
        path(tmp.path()),
    ]);
    assert!(out.status.success());
    let got = std::fs::read_to_string(tmp.path().join("mem_cross_iff.txt")).unwrap();
    assert_eq!(got, golden("mem_cross_iff.slice.txt"));
}

#[test]
fn run_then_report_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixtures().join("corpus/run.json");
    let out = improver(&["run", "--config", path(&config), "--out-dir", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(line["problems"], 24);
    assert!(line["pairs"].as_u64().unwrap() > 0);

    let summary = tmp.path().join("summary.json");
    let csv = improver(&["report", "--summary", path(&summary), "--format", "csv"]);
    assert!(csv.status.success());
    assert!(stdout(&csv).lines().count() > 1);
    let md = improver(&["report", "--summary", path(&summary), "--format", "markdown"]);
    assert_eq!(stdout(&md), std::fs::read_to_string(tmp.path().join("report.md")).unwrap());
}

#[test]
fn generate_shape_and_eval_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixtures().join("corpus/run.json");
    let scored = tmp.path().join("scored.jsonl");
    let out = improver(&["generate", "--config", path(&config), "--out", path(&scored)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (pairs, replay) = (tmp.path().join("pairs.jsonl"), tmp.path().join("replay.jsonl"));
    let out = improver(&[
        "shape",
        "--in",
        path(&scored),
        "--reservoir",
        path(&tmp.path().join("reservoir.json")),
        "--config",
        path(&config),
        "--out-pairs",
        path(&pairs),
        "--out-replay",
        path(&replay),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&pairs).unwrap().lines().count() > 0);

    let out = improver(&["eval", "--in", path(&scored), "--metric", "length", "--n", "1,2,4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(summary.is_object());
}

#[test]
fn unknown_config_field_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.json");
    std::fs::write(&config, r#"{"bogus": 1}"#).unwrap();
    let out = improver(&["run", "--config", path(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn dependency_metric_without_index_is_a_config_error() {
    let traces = fixtures().join("showcase/originals.jsonl");
    let out = improver(&["score", "--metric", "dependencies", "--traces", path(&traces)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_trace_exits_with_data_code() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("t.jsonl");
    std::fs::write(&traces, "not json\n").unwrap();
    let out = improver(&["score", "--metric", "length", "--traces", path(&traces)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "data");
}

#[cfg(unix)]
#[test]
fn protocol_violation_exits_with_backend_code() {
    use std::os::unix::fs::PermissionsExt;

    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures().join("corpus")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), tmp.path().join(entry.file_name())).unwrap();
    }
    let script = tmp.path().join("generator.sh");
    std::fs::write(&script, "#!/bin/sh\ncat >/dev/null\necho not json\n").unwrap();
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let config_path = tmp.path().join("run.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    config["generator"] = serde_json::json!({"kind": "command", "target": path(&script)});
    std::fs::write(&config_path, config.to_string()).unwrap();

    let out = improver(&["run", "--config", path(&config_path)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_kind(&out), "backend");
}
