//! Invariants over the public API, checked on generated inputs.

use proptest::prelude::*;

use cse_core::corpus::preprocess;
use cse_core::eval::{compute_metrics_with, Averaging};
use cse_core::rng::SplitMix64;
use cse_core::stacking::build_meta_features;
use cse_core::synth::{generate, SynthConfig};
use cse_core::{
    train_model, Classifier, FeaturePipeline, FeatureSet, Hyperparams, Label, LabeledCorpus, Matrix, ModelBundle, ModelKind, TfidfConfig,
    TfidfModel, TrainingProvenance,
};

fn label() -> impl Strategy<Value = Label> {
    (0usize..3).prop_map(|i| Label::ALL[i])
}

fn small_params(seed: u64) -> Hyperparams {
    let mut p = Hyperparams::default();
    p.gbdt.n_estimators = 5;
    p.gbdt.learning_rate = 0.2;
    p.gbdt.max_depth = 3;
    p.bagging.members = 2;
    p.ada_n_estimators = 10;
    p.cse_folds = 3;
    p.seed = seed;
    p
}

/// Three noisy clusters, all classes present at least `min_per` times.
fn clusters(n_per: usize, seed: u64) -> (Matrix, Vec<Label>) {
    let mut rng = SplitMix64::new(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (k, l) in Label::ALL.into_iter().enumerate() {
        for _ in 0..n_per {
            rows.push(vec![k as f64 + 0.8 * rng.normal(), rng.normal(), 0.5 * rng.normal()]);
            y.push(l);
        }
    }
    (Matrix::from_rows(&rows), y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_report_is_consistent(pairs in prop::collection::vec((label(), label()), 1..80), macro_avg: bool) {
        let (t, p): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let avg = if macro_avg { Averaging::Macro } else { Averaging::Weighted };
        let r = compute_metrics_with(&t, &p, avg).unwrap();
        prop_assert_eq!(r.total(), t.len());
        let hits = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        prop_assert_eq!(r.accuracy, hits as f64 / t.len() as f64);
        for x in [r.precision, r.recall, r.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let support: usize = Label::ALL.iter().map(|&l| r.class(l).support).sum();
        prop_assert_eq!(support, t.len());
    }

    #[test]
    fn tfidf_rows_are_unit_or_zero(docs in prop::collection::vec("[a-c ]{0,12}", 1..12), query in "[a-d ]{0,12}") {
        let Ok(m) = TfidfModel::fit(docs.iter().map(String::as_str), TfidfConfig { min_df: 1, ngram_max: 2 }) else {
            // Only an all-blank corpus has no vocabulary.
            prop_assert!(docs.iter().all(|d| d.trim().is_empty()));
            return Ok(());
        };
        for text in docs.iter().chain(std::iter::once(&query)) {
            let v = m.transform(text);
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            prop_assert!(v.to_dense().iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn every_model_emits_distributions(seed in 0u64..1000, kind_index in 0usize..5) {
        let kind = ModelKind::ALL[kind_index];
        let (x, y) = clusters(8, seed);
        let model = train_model(kind, &small_params(seed), &x, &y, 0).unwrap();
        let mut rng = SplitMix64::new(seed ^ 0x55);
        for _ in 0..10 {
            let q: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            let (l, p) = model.predict(&q).unwrap();
            let sum: f64 = p.0.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.0.iter().all(|v| (0.0..=1.0).contains(v)));
            // KNN breaks vote ties by distance, so only maximality is shared.
            let top = p.0.iter().copied().fold(0.0, f64::max);
            prop_assert_eq!(p.0[l.index()], top);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn meta_rows_hold_three_distributions(seed in 0u64..1000) {
        let (x, y) = clusters(9, seed);
        let meta = build_meta_features(&x, &y, &small_params(seed)).unwrap();
        prop_assert_eq!(meta.rows.n_cols(), 12);
        for row in meta.rows.rows() {
            for block in row.chunks(3) {
                prop_assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn bundle_survives_the_full_pipeline() {
    let s = generate(&SynthConfig {
        n_docs: 60,
        ..SynthConfig::default()
    });
    let corpus = preprocess(&LabeledCorpus::from_pairs(s.rows.clone()));
    let y = corpus.labels().unwrap();
    let pipeline = FeaturePipeline::fit(&corpus.documents, FeatureSet::TfidfEmb, TfidfConfig::default(), Some(&s.embeddings), true).unwrap();
    let x = pipeline.matrix(&corpus.documents, Some(&s.embeddings)).unwrap();
    let model = train_model(ModelKind::Cse, &small_params(1), &x, &y, 0).unwrap();
    let bundle = ModelBundle {
        pipeline,
        model,
        provenance: TrainingProvenance {
            config_text: "seed = 1\n".into(),
            corpus_fingerprint: corpus.fingerprint(),
            split_seed: 1,
            fold_seed: 2,
            model_seed: 3,
            created_unix: 0,
        },
    };
    let bytes = bundle.to_bytes();
    let back = ModelBundle::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    let again = back.pipeline.matrix(&corpus.documents, Some(&s.embeddings)).unwrap();
    assert_eq!(again, x);
    for r in x.rows() {
        assert_eq!(back.model.predict_proba(r).unwrap(), bundle.model.predict_proba(r).unwrap());
    }
}
