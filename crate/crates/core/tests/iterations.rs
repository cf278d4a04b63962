use std::path::{Path, PathBuf};

use improver_core::pipeline::{Reservoir, ShapeReport};
use improver_core::run::{run_iteration, RunConfig, RESERVOIR_FILE, SHAPE_FILE};

fn corpus_config(out: &Path) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus/run.json");
    let mut config = RunConfig::load(path).unwrap();
    config.output_dir = out.to_path_buf();
    config
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn second_iteration_replays_the_reservoir() {
    let tmp = tempfile::tempdir().unwrap();
    let first: PathBuf = tmp.path().join("iter1");
    let outcome = run_iteration(corpus_config(&first), Some(1)).unwrap();
    assert_eq!(outcome.problems, 24);
    let reservoir = Reservoir::parse(&read(&first, RESERVOIR_FILE)).unwrap();
    assert!(!reservoir.entries.is_empty());
    assert_eq!(reservoir.iteration, 1);

    let second = tmp.path().join("iter2");
    let mut config = corpus_config(&second);
    config.reservoir = Some(first.join(RESERVOIR_FILE));
    run_iteration(config, Some(1)).unwrap();
    let report: ShapeReport = serde_json::from_str(&read(&second, SHAPE_FILE)).unwrap();
    assert_eq!(report.iteration, 1);
    assert_eq!(report.replay_entries, 6);
    let next = Reservoir::parse(&read(&second, RESERVOIR_FILE)).unwrap();
    assert_eq!(next.iteration, 2);
    assert!(next.entries.len() >= reservoir.entries.len());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let one = run_iteration(corpus_config(&a), Some(1)).unwrap();
    let many = run_iteration(corpus_config(&b), Some(4)).unwrap();
    assert_eq!(one.manifest.outputs, many.manifest.outputs);
    for name in ["scored.jsonl", "pairs.jsonl", "replay.jsonl", "report.md"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn a_different_seed_changes_the_config_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let base = corpus_config(tmp.path());
    let mut reseeded = base.clone();
    reseeded.buffer.seed += 1;
    assert_ne!(base.digest(), reseeded.digest());
}
