use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use cse_bench::fixture;
use cse_core::learners::{train_adaboost, train_gbdt, train_knn, train_logreg, GbdtConfig, GdConfig};
use cse_core::{train_model, Classifier, FeatureSet, Hyperparams, ModelKind};

fn tfidf(c: &mut Criterion) {
    let f = fixture(300, FeatureSet::Tfidf);
    c.bench_function("tfidf_transform_60_docs", |b| {
        b.iter(|| {
            for t in &f.texts {
                black_box(f.pipeline.transform(t, None).unwrap());
            }
        })
    });
}

fn base_learners(c: &mut Criterion) {
    let f = fixture(300, FeatureSet::TfidfEmb);
    let mut g = c.benchmark_group("train_240_rows");
    g.sample_size(10);
    g.bench_function("logreg", |b| b.iter(|| train_logreg(&f.x_train, &f.y_train, 0.1, GdConfig::default()).unwrap()));
    g.bench_function("gbdt_50_rounds", |b| b.iter(|| train_gbdt(&f.x_train, &f.y_train, GbdtConfig::default()).unwrap()));
    g.bench_function("adaboost_50_stumps", |b| b.iter(|| train_adaboost(&f.x_train, &f.y_train, 50, 1).unwrap()));
    g.finish();

    let knn = train_knn(&f.x_train, &f.y_train, 3).unwrap();
    c.bench_function("knn_predict_60_queries", |b| {
        b.iter(|| {
            for r in f.x_test.rows() {
                black_box(knn.predict(r).unwrap());
            }
        })
    });
}

fn ensemble(c: &mut Criterion) {
    let f = fixture(150, FeatureSet::TfidfEmb);
    let mut p = Hyperparams::default();
    p.bagging.members = 3;
    let mut g = c.benchmark_group("cse");
    g.sample_size(10);
    g.bench_function("train_120_rows_3_members", |b| {
        b.iter_batched(|| p, |p| train_model(ModelKind::Cse, &p, &f.x_train, &f.y_train, 0).unwrap(), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, tfidf, base_learners, ensemble);
criterion_main!(benches);
