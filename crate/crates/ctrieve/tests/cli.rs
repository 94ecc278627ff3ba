use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ctrieve::formats::{embeddings_to_string, EmbeddingRecord};

fn ctrieve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrieve")).args(args).current_dir(dir).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn synth_corpus(dir: &Path) {
    let out = ctrieve(dir, &["synth", "--out", "data", "--pairs", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let vocab = ctrieve(dir, &["build-vocab", "--manifest", "data/manifest.jsonl", "--out", "vocab.txt", "--train-split", "all"]);
    assert!(vocab.status.success(), "{}", String::from_utf8_lossy(&vocab.stderr));
}

#[test]
fn every_command_announces_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctrieve(dir.path(), &["synth", "--out", "data", "--pairs", "4", "--seed", "12"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("# ctrieve synth, seed 12"), "{err}");
    assert!(err.contains("tau = "), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "tau = 1.0\nnot_a_key = 3\n").unwrap();
    assert_eq!(code(&ctrieve(dir.path(), &["--config", "bad.toml", "stats", "--manifest", "m.jsonl"])), 2);
    fs::write(dir.path().join("paths.toml"), "[paths]\nvocab = \"missing.txt\"\n").unwrap();
    synth_corpus(dir.path());
    let out = ctrieve(dir.path(), &["--config", "paths.toml", "train", "--manifest", "data/manifest.jsonl", "--out", "m.ckpt"]);
    assert_eq!(code(&out), 2);
    let out = ctrieve(dir.path(), &["train", "--manifest", "data/manifest.jsonl", "--vocab", "vocab.txt", "--out", "m.ckpt", "--tau", "0"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&ctrieve(dir.path(), &["stats"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ctrieve(dir.path(), &["stats", "--manifest", "absent.jsonl"])), 3);
    fs::create_dir(dir.path().join("raw")).unwrap();
    assert_eq!(code(&ctrieve(dir.path(), &["curate", "--raw", "raw", "--out", "m.jsonl"])), 3);
    fs::write(dir.path().join("garbage.jsonl"), "{not json\n").unwrap();
    assert_eq!(code(&ctrieve(dir.path(), &["stats", "--manifest", "garbage.jsonl"])), 3);
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path());
    let out = ctrieve(
        dir.path(),
        &[
            "train", "--manifest", "data/manifest.jsonl", "--vocab", "vocab.txt", "--out", "m.ckpt",
            "--train-split", "all", "--patch", "4", "--standard-side", "8", "--lr", "1e300", "--epochs", "3",
        ],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("m.ckpt").exists());
}

#[test]
fn eval_of_self_aligned_embeddings_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<EmbeddingRecord> = (0..6)
        .map(|i| {
            let v: Vec<f64> = (0..4).map(|j| if j == i % 4 { 1.0 + i as f64 } else { 0.1 * j as f64 }).collect();
            EmbeddingRecord { id: format!("e{i}"), text: v.clone(), image: v, keywords: Default::default() }
        })
        .collect();
    fs::write(dir.path().join("emb.jsonl"), embeddings_to_string(&records)).unwrap();
    let out = ctrieve(dir.path(), &["eval", "--embeddings", "emb.jsonl", "--vocab", "unused.txt"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["text_to_image"]["r1"], 1.0);
    assert_eq!(reports[0]["image_to_text"]["mean_rank"], 1.0);
}

#[test]
fn train_then_keyword_query_lists_samples() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(dir.path());
    let common = ["--manifest", "data/manifest.jsonl", "--vocab", "vocab.txt", "--train-split", "all", "--eval-split", "all", "--patch", "4", "--standard-side", "8", "--dim", "8"];
    let mut train = vec!["train", "--out", "m.ckpt", "--epochs", "2", "--batch-size", "8"];
    train.extend(common);
    assert!(ctrieve(dir.path(), &train).status.success());
    let mut query = vec!["query", "--checkpoint", "m.ckpt", "--keyword", "effusion", "--k", "5"];
    query.extend(common);
    let out = ctrieve(dir.path(), &query);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let ranks: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ranks, ["1", "2", "3", "4", "5"]);
}
