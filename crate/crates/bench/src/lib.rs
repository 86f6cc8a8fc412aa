//! Fixtures for the criterion benches: the synthetic benchmark corpus turned
//! into train/test feature matrices.

use cse_core::corpus::{preprocess, split};
use cse_core::synth::{generate, SynthConfig};
use cse_core::{FeaturePipeline, FeatureSet, Label, LabeledCorpus, Matrix, TfidfConfig};

pub struct Fixture {
    pub pipeline: FeaturePipeline,
    pub texts: Vec<String>,
    pub x_train: Matrix,
    pub y_train: Vec<Label>,
    pub x_test: Matrix,
}

pub fn fixture(n_docs: usize, set: FeatureSet) -> Fixture {
    let s = generate(&SynthConfig {
        n_docs,
        ..SynthConfig::default()
    });
    let corpus = preprocess(&LabeledCorpus::from_pairs(s.rows));
    let labels = corpus.labels().expect("synthetic rows are labeled");
    let plan = split(&labels, 0.2, 42, true).expect("enough documents per class");
    let train = corpus.subset(&plan.train_indices);
    let test = corpus.subset(&plan.test_indices);
    let emb = set.uses_embeddings().then_some(&s.embeddings);
    let pipeline = FeaturePipeline::fit(&train.documents, set, TfidfConfig::default(), emb, true).expect("pipeline fits");
    Fixture {
        x_train: pipeline.matrix(&train.documents, emb).expect("train features"),
        x_test: pipeline.matrix(&test.documents, emb).expect("test features"),
        y_train: plan.train_indices.iter().map(|&i| labels[i]).collect(),
        texts: test.documents.iter().map(|d| d.text.clone()).collect(),
        pipeline,
    }
}
