use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchsql")).args(args).current_dir(cwd).output().unwrap()
}

fn synth(dir: &Path) {
    let out = run(&["synth", "--out", ".", "--train", "20", "--heldout", "6"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_with_gold_predictions_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = run(
        &["eval", "--examples", "train.jsonl", "--tables", "tables.jsonl", "--preds", "train.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["acc_lf", "acc_qm", "acc_ex", "acc_agg", "acc_sel", "acc_where"] {
        assert_eq!(v[key], 1.0, "{key}");
    }
    assert_eq!(v["n"], 20);
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eval", "--examples", "nope.jsonl", "--tables", "nope.tables.jsonl", "--preds", "x"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["tag", "--question", "x", "--tables", "t", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = std::fs::read_to_string(dir.path().join("config.toml")).unwrap().replace("hidden = 120", "hidden = 8");
    std::fs::write(dir.path().join("config.toml"), cfg).unwrap();
    let out = run(
        &[
            "train", "--examples", "train.jsonl", "--tables", "tables.jsonl", "--dev-examples", "heldout.jsonl",
            "--config", "config.toml", "--checkpoint", "m.tsq", "--epochs", "2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8_lossy(&out.stdout);
    assert_eq!(log.lines().count(), 2);
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["train_loss"].as_f64().unwrap().is_finite());

    let line = std::fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    let ex: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let out = run(
        &[
            "predict", "--question", ex["question"].as_str().unwrap(), "--tables", "tables.jsonl", "--table-id",
            ex["table_id"].as_str().unwrap(), "--config", "config.toml", "--checkpoint", "m.tsq",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("SELECT "));
}
