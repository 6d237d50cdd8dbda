use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nerrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nerrank")).args(args).current_dir(dir).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn eval_on_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = "Barack\tB-PER\nObama\tI-PER\nwas\tO\nborn\tO\nin\tO\nhawaii\tB-LOC\n.\tO\n\n";
    fs::write(dir.path().join("gold.conll"), gold).unwrap();
    let o = nerrank(dir.path(), &["eval", "--gold", "gold.conll", "--pred", "gold.conll"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == "F1 = 100.00"), "{}", stdout(&o));
    let metrics = fs::read_to_string(dir.path().join("out/eval.metrics")).unwrap();
    assert!(metrics.starts_with("#nerrank 0.1.0 config="));
    assert!(metrics.contains("\nf1 = 100.00\n"));
    let manifest = fs::read_to_string(dir.path().join("out/eval.manifest")).unwrap();
    assert!(manifest.contains("command = eval") && manifest.contains("seed = 1"));
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(nerrank(p, &[]).status.code(), Some(2));
    assert_eq!(nerrank(p, &["eval", "--no_such_key", "1"]).status.code(), Some(2));
    assert_eq!(nerrank(p, &["eval", "--gold", "missing.conll", "--pred", "missing.conll"]).status.code(), Some(3));
    fs::write(p.join("bad.nbest"), "CAND\t0.5\tO\n").unwrap();
    assert_eq!(nerrank(p, &["oracle", "--input", "bad.nbest"]).status.code(), Some(5));
    fs::write(p.join("bad.conll"), "word\n").unwrap();
    assert_eq!(nerrank(p, &["eval", "--gold", "bad.conll", "--pred", "bad.conll"]).status.code(), Some(5));
    assert_eq!(nerrank(p, &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("run.cfg"), "# toy\ntoy_sentences = 40\nseed = 3\nout_dir = a\n").unwrap();
    assert!(nerrank(p, &["make-toy", "--config", "run.cfg"]).status.success());
    assert!(nerrank(p, &["make-toy", "--config", "run.cfg", "--out_dir", "b"]).status.success());
    let a = fs::read_to_string(p.join("a/train.conll")).unwrap();
    let b = fs::read_to_string(p.join("b/train.conll")).unwrap();
    assert_eq!(a.lines().skip(1).collect::<Vec<_>>(), b.lines().skip(1).collect::<Vec<_>>());
    assert_ne!(a.lines().next(), b.lines().next());
    fs::write(p.join("typo.cfg"), "epochz = 3\n").unwrap();
    assert_eq!(nerrank(p, &["make-toy", "--config", "typo.cfg"]).status.code(), Some(2));
}

#[test]
fn checkpoint_dimension_mismatch_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let small = ["--word_dim", "8", "--char_dim", "4", "--char_cnn_filters", "4", "--lstm_hidden", "6", "--word_cnn_filters", "6"];
    assert!(nerrank(p, &["make-toy", "--out_dir", "toy", "--toy_sentences", "120"]).status.success());
    assert!(nerrank(p, &["jackknife", "--train", "toy/train.conll", "--templates", "lexical", "--crf_epochs", "3"]).status.success());
    assert!(nerrank(p, &["baseline-train", "--train", "toy/train.conll", "--templates", "lexical", "--crf_epochs", "3"]).status.success());
    assert!(nerrank(p, &["baseline-decode", "--model", "out/baseline.json", "--input", "toy/dev.conll", "--output", "out/dev.nbest"]).status.success());
    let mut train = vec!["rerank-train", "--train_nbest", "out/train.nbest", "--dev_nbest", "out/dev.nbest", "--epochs", "1"];
    train.extend(small);
    assert!(nerrank(p, &train).status.success());
    let mut decode = vec!["rerank-decode", "--reranker_dir", "out/reranker", "--input", "out/dev.nbest"];
    decode.extend(small);
    assert!(nerrank(p, &decode).status.success());
    decode.extend(["--lstm_hidden", "7"]);
    let o = nerrank(p, &decode);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let o = nerrank(p, &["collapse", "--input", "out/dev.nbest"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().count() > 24);
}

#[test]
fn experiment_reports_every_ablation_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(nerrank(p, &["make-toy", "--out_dir", "toy", "--toy_sentences", "150"]).status.success());
    let o = nerrank(
        p,
        &[
            "experiment",
            "--train",
            "toy/train.conll",
            "--dev",
            "toy/dev.conll",
            "--test",
            "toy/test.conll",
            "--templates",
            "lexical",
            "--crf_epochs",
            "3",
            "--epochs",
            "1",
            "--word_dim",
            "8",
            "--char_dim",
            "4",
            "--char_cnn_filters",
            "4",
            "--lstm_hidden",
            "6",
            "--word_cnn_filters",
            "6",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let names: Vec<&str> = table.lines().skip(1).filter_map(|l| l.split_whitespace().next()).collect();
    assert_eq!(names, ["baseline", "LSTM", "+CNN", "+char", "full"]);
    for key in ["baseline", "LSTM", "CNN", "char", "full"] {
        let pred = fs::read_to_string(p.join(format!("out/predictions.{key}.conll"))).unwrap();
        assert!(pred.starts_with("#nerrank "));
    }
}
