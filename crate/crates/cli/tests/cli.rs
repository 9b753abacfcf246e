//! Black-box tests of the command-line interface: exit codes, artifact
//! gating, and end-to-end command chaining on small synthetic corpora.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crashprint"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let output = bin().args(args).current_dir(dir).output().expect("spawn");
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_expect_code(args: &[&str], dir: &Path, code: i32) -> Output {
    let output = bin().args(args).current_dir(dir).output().expect("spawn");
    assert_eq!(
        output.status.code(),
        Some(code),
        "command {:?}:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Writes a tiny train/validation corpus and returns the directory.
fn generate_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    run_ok(
        &[
            "gen-synthetic",
            "--out",
            "traces.jsonl",
            "--labels-out",
            "labels_truth.jsonl",
            "--archetypes",
            "3",
            "--sessions-per-archetype",
            "20",
            "--metrics",
            "16",
            "--defining-per-archetype",
            "2",
            "--len-min",
            "14",
            "--len-max",
            "20",
            "--sparsity",
            "0.15",
            "--seed",
            "11",
        ],
        dir,
    );
    let text = std::fs::read_to_string(dir.join("traces.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 60);
    let (mut train, mut val) = (String::new(), String::new());
    for (i, line) in lines.iter().enumerate() {
        if i % 20 < 14 {
            train.push_str(line);
            train.push('\n');
        } else {
            val.push_str(line);
            val.push('\n');
        }
    }
    let train_path = dir.join("train.jsonl");
    let val_path = dir.join("val.jsonl");
    std::fs::write(&train_path, train).unwrap();
    std::fs::write(&val_path, val).unwrap();
    (train_path, val_path)
}

fn pipeline_args(dir: &Path) -> Vec<Vec<String>> {
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    vec![
        vec![
            "preprocess".into(),
            "--input".into(),
            path("train.jsonl"),
            "--out".into(),
            path("train_tensors.json"),
            "--t".into(),
            "12".into(),
            "--seed".into(),
            "11".into(),
        ],
        vec![
            "preprocess".into(),
            "--input".into(),
            path("val.jsonl"),
            "--out".into(),
            path("val_tensors.json"),
            "--vocab-from".into(),
            path("train_tensors.json"),
            "--split".into(),
            "validation".into(),
            "--t".into(),
            "12".into(),
            "--seed".into(),
            "11".into(),
        ],
        vec![
            "train".into(),
            "--tensors".into(),
            path("train_tensors.json"),
            "--out".into(),
            path("bundle.json"),
            "--variant".into(),
            "ae".into(),
            "--epochs".into(),
            "25".into(),
            "--seed".into(),
            "11".into(),
            "--config".into(),
            path("config.json"),
        ],
        vec![
            "calibrate".into(),
            "--bundle".into(),
            path("bundle.json"),
            "--tensors".into(),
            path("val_tensors.json"),
            "--out".into(),
            path("calibrated.json"),
            "--k-range".into(),
            "2..5".into(),
            "--percentile".into(),
            "0.95".into(),
            "--curve-out".into(),
            path("elbow.csv"),
        ],
        vec![
            "assign".into(),
            "--bundle".into(),
            path("calibrated.json"),
            "--input".into(),
            path("val.jsonl"),
            "--out".into(),
            path("labels.jsonl"),
        ],
        vec![
            "detect".into(),
            "--bundle".into(),
            path("calibrated.json"),
            "--input".into(),
            path("val.jsonl"),
            "--out".into(),
            path("verdicts.jsonl"),
        ],
        vec![
            "explain".into(),
            "--bundle".into(),
            path("calibrated.json"),
            "--tensors".into(),
            path("val_tensors.json"),
            "--labels".into(),
            path("labels.jsonl"),
            "--absence".into(),
            "--average".into(),
            "--out-dir".into(),
            path("explain_out"),
        ],
        vec![
            "viz".into(),
            "--bundle".into(),
            path("calibrated.json"),
            "--tensors".into(),
            path("val_tensors.json"),
            "--labels".into(),
            path("labels.jsonl"),
            "--out".into(),
            path("coords.csv"),
            "--perplexity".into(),
            "5".into(),
            "--iters".into(),
            "120".into(),
        ],
    ]
}

fn write_small_config(dir: &Path) {
    // Small fine-tuning budget keeps the smoke run quick.
    std::fs::write(
        dir.join("config.json"),
        r#"{"t":12,"dec_k":5,"dec_iterations":20,"dec_update_interval":10,"epochs":25,"batch_size":16,"learning_rate":0.003,"k_range":[2,5]}"#,
    )
    .unwrap();
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(dir.path());
    write_small_config(dir.path());
    for args in pipeline_args(dir.path()) {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&args, dir.path());
    }

    for artifact in [
        "train_tensors.json",
        "val_tensors.json",
        "bundle.json",
        "calibrated.json",
        "elbow.csv",
        "labels.jsonl",
        "verdicts.jsonl",
        "coords.csv",
        "explain_out/presence.csv",
        "explain_out/absence.csv",
        "explain_out/average_value.csv",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }

    let elbow = std::fs::read_to_string(dir.path().join("elbow.csv")).unwrap();
    assert!(elbow.starts_with("k,silhouette,calinski_harabasz,davies_bouldin"));
    assert_eq!(elbow.lines().count(), 5); // header + k in 2..=5

    let labels = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(labels.lines().count(), 18);
    for line in labels.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["session_id"].is_string());
        assert!(v["cluster"].is_u64());
    }

    let coords = std::fs::read_to_string(dir.path().join("coords.csv")).unwrap();
    assert!(coords.starts_with("session_id,x,y,cluster_label,tag"));
    assert_eq!(coords.lines().count(), 19);
}

#[test]
fn assign_twice_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(dir.path());
    write_small_config(dir.path());
    for args in pipeline_args(dir.path()).into_iter().take(5) {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&args, dir.path());
    }
    let first = std::fs::read(dir.path().join("labels.jsonl")).unwrap();
    let args = &pipeline_args(dir.path())[4];
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&args, dir.path());
    let second = std::fs::read(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn empty_input_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    run_expect_code(
        &[
            "preprocess",
            "--input",
            "empty.jsonl",
            "--out",
            "out.json",
        ],
        dir.path(),
        2,
    );
}

#[test]
fn malformed_trace_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"not\": \"a trace\"}\n").unwrap();
    run_expect_code(
        &["preprocess", "--input", "bad.jsonl", "--out", "out.json"],
        dir.path(),
        2,
    );
}

#[test]
fn uncalibrated_bundle_refuses_production_commands() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(dir.path());
    write_small_config(dir.path());
    for args in pipeline_args(dir.path()).into_iter().take(3) {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&args, dir.path());
    }
    // assign against the uncalibrated bundle: invalid state (exit 3).
    run_expect_code(
        &[
            "assign",
            "--bundle",
            "bundle.json",
            "--input",
            "val.jsonl",
            "--out",
            "labels.jsonl",
        ],
        dir.path(),
        3,
    );
}

#[test]
fn mismatched_vocabulary_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(dir.path());
    write_small_config(dir.path());
    for args in pipeline_args(dir.path()).into_iter().take(3) {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        run_ok(&args, dir.path());
    }
    // Preprocess validation with its own (different) vocabulary.
    run_ok(
        &[
            "preprocess",
            "--input",
            "val.jsonl",
            "--out",
            "alien_tensors.json",
            "--t",
            "12",
            "--presence-threshold",
            "0.5",
        ],
        dir.path(),
    );
    run_expect_code(
        &[
            "calibrate",
            "--bundle",
            "bundle.json",
            "--tensors",
            "alien_tensors.json",
            "--out",
            "calibrated.json",
            "--k-range",
            "2..4",
        ],
        dir.path(),
        3,
    );
}

#[test]
fn gen_synthetic_is_deterministic_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen-synthetic",
        "--out",
        "a.jsonl",
        "--labels-out",
        "la.jsonl",
        "--archetypes",
        "2",
        "--sessions-per-archetype",
        "7",
        "--metrics",
        "10",
        "--len-min",
        "8",
        "--len-max",
        "12",
        "--seed",
        "3",
    ];
    run_ok(&args, dir.path());
    let mut again = args;
    again[2] = "b.jsonl";
    again[4] = "lb.jsonl";
    run_ok(&again, dir.path());
    assert_eq!(
        std::fs::read(dir.path().join("a.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("a.jsonl"))
            .unwrap()
            .lines()
            .count(),
        14
    );
    let labels = std::fs::read_to_string(dir.path().join("la.jsonl")).unwrap();
    assert_eq!(labels.lines().count(), 14);
}

#[test]
fn bad_k_range_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args([
            "calibrate",
            "--bundle",
            "x.json",
            "--tensors",
            "y.json",
            "--out",
            "z.json",
            "--k-range",
            "nonsense",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
}
