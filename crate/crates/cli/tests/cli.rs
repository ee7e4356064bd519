//! End-to-end tests driving the compiled `erex` binary: artifact chains,
//! exit codes, and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn erex() -> Command {
    Command::new(env!("CARGO_BIN_EXE_erex"))
}

fn run(args: &[&str]) -> Output {
    erex().args(args).output().expect("spawn erex")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        stdout(output),
        stderr(output)
    );
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        stdout(output),
        stderr(output)
    );
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Generate a small corpus and return its path.
fn make_corpus(dir: &Path, num_docs: usize, seed: u64) -> PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let output = run(&[
        "synth",
        "--out",
        path_str(&corpus),
        "--num-docs",
        &num_docs.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&output);
    corpus
}

#[test]
fn synth_then_validate_reports_ok() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 10, 3);
    let output = run(&["validate", "--corpus", path_str(&corpus)]);
    assert_ok(&output);
    assert!(stdout(&output).contains("ok: 10 documents"));
}

#[test]
fn validate_flags_corrupted_corpus_with_exit_6() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 10, 3);
    // Point one gold relation at an event id that doesn't exist.
    let text = std::fs::read_to_string(&corpus).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut corrupted = false;
    for line in lines.iter_mut().skip(1) {
        let mut value: serde_json::Value = serde_json::from_str(line).unwrap();
        let relations = &mut value["doc"]["relations"];
        if let Some(first) = relations.get_mut(0) {
            first["head"] = serde_json::json!("no-such-event");
            *line = serde_json::to_string(&value).unwrap();
            corrupted = true;
            break;
        }
    }
    assert!(corrupted, "expected at least one document with a relation");
    std::fs::write(&corpus, lines.join("\n") + "\n").unwrap();

    let report = dir.path().join("violations.json");
    let output = run(&[
        "validate",
        "--corpus",
        path_str(&corpus),
        "--report",
        path_str(&report),
    ]);
    assert_exit(&output, 6);
    assert!(stdout(&output).contains("no-such-event"));
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(!body["violations"].as_array().unwrap().is_empty());
}

#[test]
fn truncated_corpus_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, "{\"split\":\"train\",\"doc\":{\"id\":\"x\",").unwrap();
    let output = run(&["validate", "--corpus", path_str(&corpus)]);
    assert_exit(&output, 3);
}

#[test]
fn unknown_flag_exits_2() {
    let output = run(&["synth", "--no-such-flag"]);
    assert_exit(&output, 2);
}

#[test]
fn unknown_backend_exits_2() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 6, 1);
    let clusters = dir.path().join("clusters.jsonl");
    let output = run(&[
        "cluster",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&clusters),
    ]);
    assert_ok(&output);
    let output = run(&[
        "summarize",
        "--corpus",
        path_str(&corpus),
        "--clusters",
        path_str(&clusters),
        "--out",
        path_str(&dir.path().join("summaries.jsonl")),
        "--backend",
        "telepathy",
    ]);
    assert_exit(&output, 2);
}

#[test]
fn cluster_summarize_chain_verifies_and_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 8, 5);
    let clusters = dir.path().join("clusters.jsonl");
    let summaries = dir.path().join("summaries.jsonl");
    assert_ok(&run(&[
        "cluster",
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&clusters),
        "--k",
        "2",
    ]));
    assert_ok(&run(&[
        "summarize",
        "--corpus",
        path_str(&corpus),
        "--clusters",
        path_str(&clusters),
        "--out",
        path_str(&summaries),
    ]));
    let output = run(&[
        "inspect",
        "--corpus",
        path_str(&corpus),
        "--clusters",
        path_str(&clusters),
        "--summaries",
        path_str(&summaries),
    ]);
    assert_ok(&output);
    let text = stdout(&output);
    assert!(text.contains("hash chain clusters -> corpus: ok"));
    assert!(text.contains("hash chain summaries -> clusters: ok"));

    // Replace the corpus; every downstream hash check must now fail.
    make_corpus(dir.path(), 8, 6);
    let output = run(&[
        "summarize",
        "--corpus",
        path_str(&corpus),
        "--clusters",
        path_str(&clusters),
        "--out",
        path_str(&summaries),
    ]);
    assert_exit(&output, 3);
    assert!(stderr(&output).contains("corpus"));
}

#[test]
fn train_same_seed_yields_identical_artifacts() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 10, 9);
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let ckpt = dir.path().join(format!("ckpt-{name}.json"));
        let log = dir.path().join(format!("log-{name}.jsonl"));
        assert_ok(&run(&[
            "train",
            "--corpus",
            path_str(&corpus),
            "--checkpoint",
            path_str(&ckpt),
            "--log",
            path_str(&log),
            "--epochs",
            "2",
            "--seed",
            "7",
        ]));
        bytes.push((std::fs::read(&ckpt).unwrap(), std::fs::read(&log).unwrap()));
    }
    assert_eq!(bytes[0].0, bytes[1].0, "checkpoints differ across runs");
    assert_eq!(bytes[0].1, bytes[1].1, "train logs differ across runs");
}

#[test]
fn eval_and_ablate_write_reports() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 10, 11);
    let ckpt = dir.path().join("ckpt.json");
    assert_ok(&run(&[
        "train",
        "--corpus",
        path_str(&corpus),
        "--checkpoint",
        path_str(&ckpt),
        "--epochs",
        "1",
        "--seed",
        "1",
    ]));
    let eval_report = dir.path().join("eval.json");
    let output = run(&[
        "eval",
        "--corpus",
        path_str(&corpus),
        "--checkpoint",
        path_str(&ckpt),
        "--split",
        "test",
        "--out",
        path_str(&eval_report),
    ]);
    assert_ok(&output);
    assert!(stdout(&output).contains("variant"));
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_report).unwrap()).unwrap();
    assert_eq!(body["report"]["variants"].as_array().unwrap().len(), 1);
    assert_eq!(body["_meta"]["kind"], "report");

    let ablate_report = dir.path().join("ablate.json");
    let output = run(&[
        "ablate",
        "--corpus",
        path_str(&corpus),
        "--checkpoint",
        path_str(&ckpt),
        "--out",
        path_str(&ablate_report),
    ]);
    assert_ok(&output);
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ablate_report).unwrap()).unwrap();
    let variants = body["report"]["variants"].as_array().unwrap();
    assert_eq!(variants.len(), 7, "ablation must cover every strategy");
}

#[test]
fn llm_run_mock_then_replay_matches() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 10, 13);
    let transcript = dir.path().join("transcript.jsonl");
    let report = dir.path().join("report.json");
    let output = run(&[
        "llm-run",
        "--corpus",
        path_str(&corpus),
        "--split",
        "test",
        "--variant",
        "sentence_pair",
        "--transcript",
        path_str(&transcript),
        "--out",
        path_str(&report),
    ]);
    assert_ok(&output);
    assert!(stdout(&output).contains("sentence_pair"));

    let replay_report = dir.path().join("replay.json");
    let output = run(&[
        "llm-run",
        "--corpus",
        path_str(&corpus),
        "--variant",
        "sentence_pair",
        "--replay",
        path_str(&transcript),
        "--out",
        path_str(&replay_report),
    ]);
    assert_ok(&output);
    let original: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let replayed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&replay_report).unwrap()).unwrap();
    assert_eq!(original["report"], replayed["report"]);
}

#[test]
fn llm_run_sample_limits_documents() {
    let dir = TempDir::new().unwrap();
    let corpus = make_corpus(dir.path(), 12, 17);
    let report = dir.path().join("report.json");
    let output = run(&[
        "llm-run",
        "--corpus",
        path_str(&corpus),
        "--split",
        "train",
        "--sample",
        "2",
        "--variant",
        "sentence_pair",
        "--out",
        path_str(&report),
    ]);
    assert_ok(&output);
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(body["report"]["documents"], 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("erex.toml");
    std::fs::write(
        &config,
        "[synth]\nnum_docs = 6\nseed = 21\nsentences_per_doc = 8\n",
    )
    .unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let output = run(&[
        "--config",
        path_str(&config),
        "synth",
        "--out",
        path_str(&corpus),
    ]);
    assert_ok(&output);
    assert!(stdout(&output).contains("wrote 6 documents"));

    let output = run(&[
        "--config",
        path_str(&config),
        "synth",
        "--out",
        path_str(&corpus),
        "--num-docs",
        "4",
    ]);
    assert_ok(&output);
    assert!(stdout(&output).contains("wrote 4 documents"));
}

#[test]
fn config_file_rejects_unknown_sections() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("erex.toml");
    std::fs::write(&config, "[sinth]\nnum_docs = 6\n").unwrap();
    let output = run(&[
        "--config",
        path_str(&config),
        "synth",
        "--out",
        path_str(&dir.path().join("corpus.jsonl")),
    ]);
    assert_exit(&output, 2);
}
