mod common;

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use cse_cli::commands::{cmd_compare, cmd_synth, SYNTH_CORPUS, SYNTH_EMBEDDINGS};
use cse_core::eval::report::comparison_accuracy;
use cse_core::synth::SynthConfig;
use cse_core::{FeatureSet, ModelKind};

fn cse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_quick(out: &Path, features: &str, model: &str) -> Output {
    let corpus = common::corpus_path();
    let emb = common::embeddings_path();
    cse(&[
        "train",
        "--corpus",
        s(&corpus),
        "--embeddings",
        s(&emb),
        "--features",
        features,
        "--model",
        model,
        "--out",
        s(out),
    ])
}

/// `id -> (predicted, probabilities)` from a predictions.tsv.
fn predictions(tsv: &str) -> HashMap<String, (String, String)> {
    tsv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), (f[3].to_string(), f[4..7].join(",")))
        })
        .collect()
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let t = train_quick(&out, "tfidf+emb", "logreg");
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    let stdout = String::from_utf8(t.stdout).unwrap();
    assert!(stdout.contains("Overall Accuracy: "));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["metrics.tsv", "model.cseb", "predictions.tsv", "report.txt"]);

    // Reloaded bundle reproduces the held-out predictions bit for bit.
    let bundle = out.join("model.cseb");
    let corpus = common::corpus_path();
    let emb = common::embeddings_path();
    let p = cse(&["predict", "--bundle", s(&bundle), "--input", s(&corpus), "--embeddings", s(&emb)]);
    assert_eq!(code(&p), 0);
    let all = predictions(&String::from_utf8(p.stdout).unwrap());
    assert_eq!(all.len(), 300);
    let held_out = predictions(&std::fs::read_to_string(out.join("predictions.tsv")).unwrap());
    assert_eq!(held_out.len(), 60);
    for (id, pred) in &held_out {
        assert_eq!(&all[id], pred, "document {id}");
    }

    let eval_dir = dir.path().join("eval");
    let e = cse(&["evaluate", "--bundle", s(&bundle), "--corpus", s(&corpus), "--embeddings", s(&emb), "--out", s(&eval_dir)]);
    assert_eq!(code(&e), 0);
    assert!(eval_dir.join("metrics.tsv").exists());

    let no_emb = cse(&["evaluate", "--bundle", s(&bundle), "--corpus", s(&corpus), "--out", s(&eval_dir)]);
    assert_eq!(code(&no_emb), 2);
    let mismatch = cse(&["evaluate", "--bundle", s(&bundle), "--corpus", s(&corpus), "--embeddings", s(&emb), "--features", "tfidf"]);
    assert_eq!(code(&mismatch), 2);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("feature set mismatch"));

    let single = cse(&["predict", "--bundle", s(&bundle), "--text", "texto completamente nuevo", "--embeddings", s(&emb)]);
    // A new text has no precomputed embedding.
    assert_eq!(code(&single), 3);
}

#[test]
fn tfidf_bundle_predicts_free_text_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&train_quick(&out, "tfidf", "knn")), 0);
    let bundle = out.join("model.cseb");

    let p = cse(&["predict", "--bundle", s(&bundle), "--text", "La atención fue excelente."]);
    assert_eq!(code(&p), 0);
    let text = String::from_utf8(p.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);

    let emb = common::embeddings_path();
    let stray = cse(&["predict", "--bundle", s(&bundle), "--text", "hola", "--embeddings", s(&emb)]);
    assert_eq!(code(&stray), 0);
    assert!(String::from_utf8_lossy(&stray.stderr).contains("ignoring --embeddings"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let pred_dir = dir.path().join("pred");
    let e = cse(&["predict", "--bundle", s(&bundle), "--input", s(&empty), "--out", s(&pred_dir)]);
    assert_eq!(code(&e), 0);
    let written = std::fs::read_to_string(pred_dir.join("predictions.tsv")).unwrap();
    assert_eq!(written.lines().count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("nope.csv");
    let c = cse(&["train", "--corpus", s(&missing), "--features", "tfidf", "--out", s(&out)]);
    assert_eq!(code(&c), 3);

    let corpus = common::corpus_path();
    let tfidf = |extra: &[&str]| {
        let mut args = vec!["train", "--corpus", s(&corpus), "--features", "tfidf", "--out", s(&out)];
        args.extend_from_slice(extra);
        cse(&args)
    };
    assert_eq!(code(&tfidf(&["--param", "knn__neighbours=3"])), 2);
    assert_eq!(code(&tfidf(&["--param", "knn__n_neighbors"])), 2);
    assert_eq!(code(&tfidf(&["--model", "svm"])), 2);
    assert_eq!(code(&tfidf(&["--model", "knn", "--param", "knn__n_neighbors=1000"])), 4);
    assert_eq!(code(&cse(&["train", "--corpus", s(&corpus), "--out", s(&out)])), 2, "tfidf+emb without embeddings");
    assert_eq!(code(&cse(&["frobnicate"])), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nkind = \"cse\"\ncolour = 1\n").unwrap();
    assert_eq!(code(&cse(&["train", "--config", s(&bad)])), 2);
    assert!(!out.exists(), "failed runs write nothing");
}

#[test]
fn shipped_data_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(dir.path(), &SynthConfig::default()).unwrap();
    for name in [SYNTH_CORPUS, SYNTH_EMBEDDINGS] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let shipped = std::fs::read(common::data_dir().join(name)).unwrap();
        assert!(fresh == shipped, "{name} differs from the generator output");
    }
}

#[test]
fn embeddings_do_not_hurt_any_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::bundled_config("compare.toml", dir.path());
    let rows = cmd_compare(&cfg).unwrap();
    for m in ModelKind::ALL {
        let t = comparison_accuracy(&rows, m, FeatureSet::Tfidf).unwrap();
        let te = comparison_accuracy(&rows, m, FeatureSet::TfidfEmb).unwrap();
        assert!(te >= t - 0.02, "{m}: tfidf+emb {te} < tfidf {t} - 0.02");
    }
    for f in ["comparison.tsv", "comparison.txt", "plot_data.tsv"] {
        assert!(dir.path().join(f).exists());
    }
    let tsv = std::fs::read_to_string(dir.path().join("comparison.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 11);
}
