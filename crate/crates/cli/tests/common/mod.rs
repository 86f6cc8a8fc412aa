#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cse_cli::ExperimentConfig;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn corpus_path() -> PathBuf {
    data_dir().join("synthetic_corpus.csv")
}

pub fn embeddings_path() -> PathBuf {
    data_dir().join("synthetic_embeddings.emb1")
}

/// A bundled config with data paths made absolute and output sent to `out`.
pub fn bundled_config(name: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&data_dir().join(name)).expect("bundled config parses");
    cfg.data.corpus = Some(corpus_path());
    cfg.data.embeddings = Some(embeddings_path());
    cfg.output.dir = out.to_path_buf();
    cfg
}
