//! Behavior of the compiled binary: golden outputs, exit codes, and the
//! validate-before-write contract.

mod common;

use std::path::Path;

use dascl::corpus::{Corpus, Example};

use common::{dascl_bin, run_ok, write_corpus};

fn write_lines(path: &Path, lines: &[&str]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn simplify_reproduces_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_lines(&root.join("pos.txt"), &["wonderfully", "warm", "vividly"]);
    let corpus = Corpus::from_examples(vec![Example::new(
        "d1",
        "A wonderfully warm human drama that remains vividly in memory long after viewing",
        1,
    )])
    .unwrap();
    write_corpus(&corpus, &root.join("in.jsonl"));

    run_ok(
        dascl_bin()
            .arg("simplify")
            .arg("--dict")
            .arg(format!("{}:<positive>", root.join("pos.txt").display()))
            .arg("--in")
            .arg(root.join("in.jsonl"))
            .arg("--out")
            .arg(root.join("out.jsonl")),
    );

    let out = Corpus::read_jsonl(std::fs::read(root.join("out.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(
        out.examples()[0].text,
        "a <positive> <positive> human drama that remains <positive> in memory long after viewing"
    );
    assert_eq!(out.examples()[0].id, "d1");
}

#[test]
fn simplify_without_dictionaries_normalizes_only() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = Corpus::from_examples(vec![
        Example::new("a", "Hello, World!", 0),
        Example::new("b", "second line stays second", 1),
    ])
    .unwrap();
    write_corpus(&corpus, &root.join("in.jsonl"));

    run_ok(
        dascl_bin()
            .arg("simplify")
            .arg("--in")
            .arg(root.join("in.jsonl"))
            .arg("--out")
            .arg(root.join("out.jsonl")),
    );

    let out = Corpus::read_jsonl(std::fs::read(root.join("out.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out.examples()[0].text, "hello world");
    assert_eq!(out.examples()[1].id, "b");
    assert_eq!(out.examples()[1].text, "second line stays second");
}

#[test]
fn simplify_missing_input_exits_1_and_names_the_path() {
    let out = dascl_bin()
        .arg("simplify")
        .arg("--in")
        .arg("/nonexistent/input.jsonl")
        .arg("--out")
        .arg("/tmp/never-written.jsonl")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/input.jsonl"), "stderr: {stderr}");
}

#[test]
fn simplify_rejects_malformed_dict_flags() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_lines(&root.join("pos.txt"), &["good"]);
    write_corpus(
        &Corpus::from_examples(vec![Example::new("a", "x", 0)]).unwrap(),
        &root.join("in.jsonl"),
    );

    // missing token separator
    let out = dascl_bin()
        .arg("simplify")
        .arg("--dict")
        .arg(root.join("pos.txt"))
        .arg("--in")
        .arg(root.join("in.jsonl"))
        .arg("--out")
        .arg(root.join("out.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // malformed token shape
    let out = dascl_bin()
        .arg("simplify")
        .arg("--dict")
        .arg(format!("{}:positive", root.join("pos.txt").display()))
        .arg("--in")
        .arg(root.join("in.jsonl"))
        .arg("--out")
        .arg(root.join("out.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("<[a-z_]+>"));
}

#[test]
fn simplify_unwritable_output_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_corpus(
        &Corpus::from_examples(vec![Example::new("a", "x", 0)]).unwrap(),
        &root.join("in.jsonl"),
    );
    let out = dascl_bin()
        .arg("simplify")
        .arg("--in")
        .arg(root.join("in.jsonl"))
        .arg("--out")
        .arg(root.join("missing-dir/out.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn tiny_experiment(root: &Path, mode: &str, extra: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let train = Corpus::from_examples(
        (0..12)
            .map(|i| {
                let label = i % 2;
                let word = if label == 1 { "bright" } else { "murky" };
                Example::new(format!("t{i}"), format!("{word} sky number{i}"), label)
            })
            .collect(),
    )
    .unwrap();
    write_corpus(&train, &root.join("train.jsonl"));
    write_corpus(&train, &root.join("val.jsonl"));
    write_lines(&root.join("pos.txt"), &["bright"]);
    let mut config = serde_json::json!({
        "train": root.join("train.jsonl"),
        "val": root.join("val.jsonl"),
        "dictionaries": [{"path": root.join("pos.txt"), "token": "<positive>"}],
        "mode": mode,
        "learning_rate": 0.05,
        "batch_size": 6,
        "epochs": 4,
        "seed": 9,
        "dims": {"embedding": 8, "hidden": 8, "projection": 4, "classes": 2},
        "output_dir": root.join("out"),
    });
    for (k, v) in extra {
        config[k] = v.clone();
    }
    config
}

#[test]
fn train_ce_mode_history_has_null_contrastive_loss() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE", &[]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    run_ok(dascl_bin().arg("train").arg("--config").arg(root.join("cfg.json")));

    let history: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("out/history.json")).unwrap()).unwrap();
    let epochs = history["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 4);
    for epoch in epochs {
        assert!(epoch["contrastive_loss"].is_null());
        assert!(epoch["tau"].as_f64().unwrap() > 0.0);
    }
    assert!(root.join("out/checkpoint.json").is_file());
}

#[test]
fn train_validation_failure_creates_no_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE_DASCL", &[("lambda", serde_json::json!(1.5))]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    let out = dascl_bin()
        .arg("train")
        .arg("--config")
        .arg(root.join("cfg.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
    assert!(!root.join("out").exists(), "no outputs on validation failure");
}

#[test]
fn train_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE", &[("learning_rte", serde_json::json!(0.1))]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    let out = dascl_bin()
        .arg("train")
        .arg("--config")
        .arg(root.join("cfg.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rte"));
    assert!(!root.join("out").exists());
}

#[test]
fn train_rejects_oversized_few_shot_sample() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE", &[("few_shot_n", serde_json::json!(500))]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    let out = dascl_bin()
        .arg("train")
        .arg("--config")
        .arg(root.join("cfg.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("few_shot_n"));
    assert!(!root.join("out").exists());
}

#[test]
fn train_rejects_contrastive_mode_with_zero_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE_DASCL", &[("lambda", serde_json::json!(0.0))]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    let out = dascl_bin()
        .arg("train")
        .arg("--config")
        .arg(root.join("cfg.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_on_converged_training_corpus_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE", &[("epochs", serde_json::json!(25))]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    run_ok(dascl_bin().arg("train").arg("--config").arg(root.join("cfg.json")));

    let out = run_ok(
        dascl_bin()
            .arg("eval")
            .arg("--checkpoint")
            .arg(root.join("out/checkpoint.json"))
            .arg("--in")
            .arg(root.join("train.jsonl")),
    );
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["accuracy"].as_f64(), Some(1.0));
}

#[test]
fn eval_rejects_labels_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE", &[]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    run_ok(dascl_bin().arg("train").arg("--config").arg(root.join("cfg.json")));

    write_corpus(
        &Corpus::from_examples(vec![Example::new("bad", "bright sky", 7)]).unwrap(),
        &root.join("bad.jsonl"),
    );
    let out = dascl_bin()
        .arg("eval")
        .arg("--checkpoint")
        .arg(root.join("out/checkpoint.json"))
        .arg("--in")
        .arg(root.join("bad.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("label 7"));
}

#[test]
fn export_embeddings_writes_unit_norm_projections() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let config = tiny_experiment(root, "CE_SCL", &[]);
    std::fs::write(root.join("cfg.json"), config.to_string()).unwrap();
    run_ok(dascl_bin().arg("train").arg("--config").arg(root.join("cfg.json")));

    run_ok(
        dascl_bin()
            .arg("export-embeddings")
            .arg("--checkpoint")
            .arg(root.join("out/checkpoint.json"))
            .arg("--in")
            .arg(root.join("val.jsonl"))
            .arg("--out")
            .arg(root.join("emb.csv")),
    );
    let text = std::fs::read_to_string(root.join("emb.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("id,label,h_0"));
    assert!(header.contains(",psi_0"));
    let mut rows = 0;
    for line in lines {
        rows += 1;
        let fields: Vec<&str> = line.split(',').collect();
        let psi: Vec<f64> = fields[2 + 8..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(psi.len(), 4);
        let norm: f64 = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
    assert_eq!(rows, 12);
}

#[test]
fn gradcheck_mode_filter_passes() {
    let out = run_ok(
        dascl_bin()
            .arg("gradcheck")
            .arg("--mode")
            .arg("CE")
            .arg("--trials")
            .arg("2")
            .arg("--seed")
            .arg("5"),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mode CE:"));
    assert!(stdout.contains("PASS"));
    assert_eq!(stdout.lines().count(), 1);
}

#[test]
fn gradcheck_rejects_unknown_mode() {
    let out = dascl_bin()
        .arg("gradcheck")
        .arg("--mode")
        .arg("NOT_A_MODE")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_exits_1() {
    let out = dascl_bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = dascl_bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simplify"));
}
