//! The subcommands. Each returns its in-memory results as well as writing
//! its output files, so tests can check both.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use cse_core::bundle::reproducible_timestamp;
use cse_core::corpus::{load_corpus, load_unlabeled, make_folds, preprocess, preprocess_unlabeled, split};
use cse_core::embedding::{load_embeddings, save_embeddings};
use cse_core::eval::report::{
    classification_report, comparison_table, comparison_tsv, cv_summary, cv_tsv, grid_cells_tsv, metrics_tsv, plot_data_tsv,
};
use cse_core::eval::{compute_metrics_with, cross_validate, grid_search, Averaging, ComparisonRow, CvResult, GridResult, TrainingCounter};
use cse_core::features::require_embeddings;
use cse_core::learners::predict_rows;
use cse_core::synth::{generate, write_csv, SynthConfig};
use cse_core::{
    train_model, Classifier, CsvSchema, Document, EmbeddingTable, FeaturePipeline, FeatureSet, Label, LabeledCorpus, MetricsReport,
    ModelBundle, ModelKind, ProbDist, TrainedModel, TrainingProvenance,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_atomic, write_text};

pub const BUNDLE_FILE: &str = "model.cseb";

/// Preprocessed labeled corpus plus embeddings when the run needs them.
pub struct Dataset {
    pub corpus: LabeledCorpus,
    pub labels: Vec<Label>,
    pub embeddings: Option<EmbeddingTable>,
}

fn schema(cfg: &ExperimentConfig) -> CsvSchema {
    CsvSchema {
        text_col: cfg.data.text_col.clone(),
        label_col: cfg.data.label_col.clone(),
    }
}

fn load_table(path: &Path, docs: &[Document]) -> Result<EmbeddingTable, CliError> {
    let table = load_embeddings(path).map_err(|e| CliError::data("loading embeddings", e))?;
    require_embeddings(&table, docs).map_err(|e| CliError::data("checking embeddings", e))?;
    Ok(table)
}

pub fn load_dataset(cfg: &ExperimentConfig, need_embeddings: bool) -> Result<Dataset, CliError> {
    let path = cfg.corpus_path()?;
    let raw = load_corpus(path, &schema(cfg)).map_err(|e| CliError::data("loading corpus", e))?;
    let corpus = preprocess(&raw);
    let p = &corpus.provenance;
    info!(
        "corpus {}: {} documents ({} empty, {} unlabeled, {} duplicate rows dropped)",
        path.display(),
        corpus.len(),
        p.dropped_empty,
        p.dropped_unlabeled,
        p.dropped_duplicate
    );
    let labels = corpus.labels().map_err(|e| CliError::data("loading corpus", e))?;
    let embeddings = match (&cfg.data.embeddings, need_embeddings) {
        (Some(path), true) => Some(load_table(path, &corpus.documents)?),
        (None, true) => return Err(CliError::Config("embeddings are required but none were given".into())),
        (_, false) => None,
    };
    Ok(Dataset {
        corpus,
        labels,
        embeddings,
    })
}

/// Train/test halves of a dataset after the configured split.
struct Split {
    train: LabeledCorpus,
    test: LabeledCorpus,
    y_train: Vec<Label>,
    y_test: Vec<Label>,
}

fn split_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<Split, CliError> {
    let plan = split(&data.labels, cfg.split.test_fraction, cfg.split.seed, cfg.split.stratified)
        .map_err(|e| CliError::data("splitting corpus", e))?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data.labels[i]).collect::<Vec<_>>();
    Ok(Split {
        train: data.corpus.subset(&plan.train_indices),
        test: data.corpus.subset(&plan.test_indices),
        y_train: pick(&plan.train_indices),
        y_test: pick(&plan.test_indices),
    })
}

fn fit_pipeline(cfg: &ExperimentConfig, set: FeatureSet, train: &[Document], emb: Option<&EmbeddingTable>) -> Result<FeaturePipeline, CliError> {
    FeaturePipeline::fit(train, set, cfg.tfidf()?, emb, cfg.features.standardize).map_err(|e| CliError::data("fitting features", e))
}

fn labels_of(preds: &[(Label, ProbDist)]) -> Vec<Label> {
    preds.iter().map(|(l, _)| *l).collect()
}

fn clean(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

/// `id, row, true label (may be empty), predicted label, 3 probabilities, text`.
pub fn predictions_tsv(docs: &[Document], preds: &[(Label, ProbDist)]) -> String {
    let mut s = String::from("id\trow\tlabel\tpredicted\tp_negative\tp_neutral\tp_positive\ttext\n");
    for (d, (label, p)) in docs.iter().zip(preds) {
        let _ = writeln!(
            s,
            "{:016x}\t{}\t{}\t{label}\t{}\t{}\t{}\t{}",
            d.id,
            d.row,
            d.label.map(|l| l.as_str()).unwrap_or(""),
            p.0[0],
            p.0[1],
            p.0[2],
            clean(&d.text)
        );
    }
    s
}

fn write_report(out: &Path, report: &MetricsReport, docs: &[Document], preds: &[(Label, ProbDist)]) -> Result<(), CliError> {
    write_text(&out.join("metrics.tsv"), &metrics_tsv(report))?;
    write_text(&out.join("report.txt"), &classification_report(report))?;
    write_text(&out.join("predictions.tsv"), &predictions_tsv(docs, preds))
}

// ---------------------------------------------------------------------------

pub struct TrainOutcome {
    pub bundle_path: PathBuf,
    pub bundle: ModelBundle,
    pub report: MetricsReport,
}

/// preprocess, split, fit features on the training split, train, score the
/// held-out split and write the bundle.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let set = cfg.feature_set()?;
    let kind = cfg.model_kind()?;
    let params = cfg.hyperparams(kind)?;
    let averaging = cfg.averaging()?;
    let data = load_dataset(cfg, set.uses_embeddings())?;
    let s = split_dataset(cfg, &data)?;
    let emb = data.embeddings.as_ref();
    let pipeline = fit_pipeline(cfg, set, &s.train.documents, emb)?;
    let x_train = pipeline.matrix(&s.train.documents, emb).map_err(|e| CliError::data("building features", e))?;
    let x_test = pipeline.matrix(&s.test.documents, emb).map_err(|e| CliError::data("building features", e))?;
    info!(
        "training {kind} on {} documents x {} features ({set})",
        x_train.n_rows(),
        x_train.n_cols()
    );
    let model = train_model(kind, &params, &x_train, &s.y_train, 0).map_err(|e| CliError::training(kind.as_str(), e))?;
    let preds = predict_rows(&model, &x_test).map_err(|e| CliError::training("predicting", e))?;
    let report = compute_metrics_with(&s.y_test, &labels_of(&preds), averaging).map_err(|e| CliError::data("scoring", e))?;

    let bundle = ModelBundle {
        pipeline,
        model,
        provenance: TrainingProvenance {
            config_text: cfg.to_toml(),
            corpus_fingerprint: data.corpus.fingerprint(),
            split_seed: cfg.split.seed,
            fold_seed: cfg.folds.seed,
            model_seed: cfg.model.seed,
            created_unix: reproducible_timestamp(),
        },
    };
    let out = &cfg.output.dir;
    let bundle_path = out.join(BUNDLE_FILE);
    write_atomic(&bundle_path, &bundle.to_bytes())?;
    write_report(out, &report, &s.test.documents, &preds)?;
    Ok(TrainOutcome {
        bundle_path,
        bundle,
        report,
    })
}

// ---------------------------------------------------------------------------

pub struct EvaluateArgs {
    pub bundle: PathBuf,
    pub corpus: PathBuf,
    pub embeddings: Option<PathBuf>,
    /// When given, must equal the bundle's feature set.
    pub features: Option<FeatureSet>,
    pub schema: CsvSchema,
    pub out_dir: PathBuf,
    pub averaging: Averaging,
}

fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    ModelBundle::load(path).map_err(|e| CliError::data("loading bundle", e))
}

fn check_feature_set(bundle: &ModelBundle, requested: Option<FeatureSet>) -> Result<(), CliError> {
    match requested {
        Some(f) if f != bundle.pipeline.feature_set => Err(CliError::Config(format!(
            "feature set mismatch: bundle was trained on {}, {f} was requested",
            bundle.pipeline.feature_set
        ))),
        _ => Ok(()),
    }
}

/// Embeddings for a bundle: required for tfidf+emb bundles, ignored with a
/// warning otherwise.
fn bundle_embeddings(bundle: &ModelBundle, path: Option<&Path>, docs: &[Document]) -> Result<Option<EmbeddingTable>, CliError> {
    match (bundle.pipeline.feature_set.uses_embeddings(), path) {
        (true, Some(p)) => {
            let t = load_table(p, docs)?;
            if t.dim != bundle.pipeline.emb_dim {
                return Err(CliError::Data(format!(
                    "embedding width {} differs from the bundle's {}",
                    t.dim, bundle.pipeline.emb_dim
                )));
            }
            Ok(Some(t))
        }
        (true, None) => Err(CliError::Config("this bundle uses tfidf+emb features; pass --embeddings".into())),
        (false, Some(p)) => {
            warn!("bundle uses tfidf features only; ignoring --embeddings {}", p.display());
            Ok(None)
        }
        (false, None) => Ok(None),
    }
}

fn predict_docs(bundle: &ModelBundle, docs: &[Document], emb: Option<&EmbeddingTable>) -> Result<Vec<(Label, ProbDist)>, CliError> {
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    let x = bundle.pipeline.matrix(docs, emb).map_err(|e| CliError::data("building features", e))?;
    predict_rows(&bundle.model, &x).map_err(|e| CliError::training("predicting", e))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<MetricsReport, CliError> {
    let bundle = load_bundle(&args.bundle)?;
    check_feature_set(&bundle, args.features)?;
    let raw = load_corpus(&args.corpus, &args.schema).map_err(|e| CliError::data("loading corpus", e))?;
    let corpus = preprocess(&raw);
    let labels = corpus.labels().map_err(|e| CliError::data("loading corpus", e))?;
    let emb = bundle_embeddings(&bundle, args.embeddings.as_deref(), &corpus.documents)?;
    let preds = predict_docs(&bundle, &corpus.documents, emb.as_ref())?;
    let report = compute_metrics_with(&labels, &labels_of(&preds), args.averaging).map_err(|e| CliError::data("scoring", e))?;
    write_report(&args.out_dir, &report, &corpus.documents, &preds)?;
    Ok(report)
}

// ---------------------------------------------------------------------------

pub enum PredictInput {
    File(PathBuf),
    Text(String),
}

pub struct PredictArgs {
    pub bundle: PathBuf,
    pub input: PredictInput,
    pub embeddings: Option<PathBuf>,
    pub features: Option<FeatureSet>,
    pub schema: CsvSchema,
    /// Writes `predictions.tsv` here; stdout when absent.
    pub out_dir: Option<PathBuf>,
}

/// Predicts every non-empty, distinct input text. Labels in the input, if
/// any, are carried through to the output.
pub fn cmd_predict(args: &PredictArgs) -> Result<String, CliError> {
    let bundle = load_bundle(&args.bundle)?;
    check_feature_set(&bundle, args.features)?;
    let raw = match &args.input {
        PredictInput::File(p) => load_unlabeled(p, &args.schema).map_err(|e| CliError::data("loading input", e))?,
        PredictInput::Text(t) => LabeledCorpus {
            documents: vec![Document::new(t.clone(), None)],
            provenance: Default::default(),
        },
    };
    let corpus = preprocess_unlabeled(&raw);
    let emb = bundle_embeddings(&bundle, args.embeddings.as_deref(), &corpus.documents)?;
    let preds = predict_docs(&bundle, &corpus.documents, emb.as_ref())?;
    let tsv = predictions_tsv(&corpus.documents, &preds);
    match &args.out_dir {
        Some(dir) => write_text(&dir.join("predictions.tsv"), &tsv)?,
        None => print!("{tsv}"),
    }
    Ok(tsv)
}

// ---------------------------------------------------------------------------

pub struct GridOutcome {
    pub n_cells: usize,
    /// Absent for dry runs.
    pub result: Option<GridResult>,
    pub training_runs: usize,
    pub best_config: Option<ExperimentConfig>,
}

/// Grid search by cross-validation on the training split. A dry run only
/// enumerates the cells.
pub fn cmd_grid_search(cfg: &ExperimentConfig, dry_run: bool) -> Result<GridOutcome, CliError> {
    cfg.validate()?;
    let kind = cfg.model_kind()?;
    let (grid, selection) = cfg.grid()?;
    grid.validate(kind).map_err(|e| CliError::Config(e.to_string()))?;
    let out = &cfg.output.dir;
    if dry_run {
        let mut s = String::from("cell");
        for (k, _) in &grid.params {
            let _ = write!(s, "\t{k}");
        }
        s.push('\n');
        for (i, cell) in grid.cells().enumerate() {
            let _ = write!(s, "{i}");
            for (_, v) in &cell {
                let _ = write!(s, "\t{v}");
            }
            s.push('\n');
        }
        write_text(&out.join("grid_cells.tsv"), &s)?;
        return Ok(GridOutcome {
            n_cells: grid.n_cells(),
            result: None,
            training_runs: 0,
            best_config: None,
        });
    }

    let base = cfg.hyperparams(kind)?;
    let set = cfg.feature_set()?;
    let data = load_dataset(cfg, set.uses_embeddings())?;
    let s = split_dataset(cfg, &data)?;
    let emb = data.embeddings.as_ref();
    let pipeline = fit_pipeline(cfg, set, &s.train.documents, emb)?;
    let x = pipeline.matrix(&s.train.documents, emb).map_err(|e| CliError::data("building features", e))?;
    let positions: Vec<usize> = (0..s.y_train.len()).collect();
    let folds = make_folds(&positions, &s.y_train, cfg.folds.k, cfg.folds.stratified, cfg.folds.seed)
        .map_err(|e| CliError::data("building folds", e))?;
    info!("grid search: {} cells x {} folds for {kind}", grid.n_cells(), folds.k);
    let counter = TrainingCounter::new();
    let result = grid_search(&grid, &base, kind, &x, &s.y_train, &folds, selection, Some(&counter))
        .map_err(|e| CliError::training("grid search", e))?;
    let best = result.best_cell();
    let best_config = cfg.with_cell(&best.params);

    write_text(&out.join("grid_cells.tsv"), &grid_cells_tsv(&result).map_err(|e| CliError::training("grid search", e))?)?;
    write_text(&out.join("best_config.toml"), &best_config.to_toml())?;
    let mut summary = format!(
        "{} cells, {} folds, {} training runs\nbest cell {} ({} {:.4}){}\n",
        result.cells.len(),
        folds.k,
        counter.count(),
        best.index,
        selection.as_str(),
        best.score,
        if result.tie { ", tied with a later cell (first wins)" } else { "" }
    );
    for (k, v) in &best.params {
        let _ = writeln!(summary, "  {k} = {v}");
    }
    write_text(&out.join("grid_summary.txt"), &summary)?;
    Ok(GridOutcome {
        n_cells: result.cells.len(),
        training_runs: counter.count(),
        result: Some(result),
        best_config: Some(best_config),
    })
}

// ---------------------------------------------------------------------------

/// Trains and scores every (feature set, model) pair on one shared split.
/// A failing cell is recorded and the rest still run.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>, CliError> {
    let (models, sets) = cfg.compare_plan()?;
    let mut probe = cfg.clone();
    for &set in &sets {
        probe.features.set = set.as_str().into();
        probe.validate()?;
    }
    let params: Vec<_> = models.iter().map(|&m| cfg.hyperparams(m)).collect::<Result<_, _>>()?;
    let averaging = cfg.averaging()?;
    let need_emb = sets.iter().any(|s| s.uses_embeddings());
    let data = load_dataset(cfg, need_emb)?;
    let s = split_dataset(cfg, &data)?;
    let emb = data.embeddings.as_ref();

    let mut rows = Vec::new();
    for &set in &sets {
        let pipeline = fit_pipeline(cfg, set, &s.train.documents, emb)?;
        let x_train = pipeline.matrix(&s.train.documents, emb).map_err(|e| CliError::data("building features", e))?;
        let x_test = pipeline.matrix(&s.test.documents, emb).map_err(|e| CliError::data("building features", e))?;
        for (&kind, h) in models.iter().zip(&params) {
            let started = std::time::Instant::now();
            let result = train_model(kind, h, &x_train, &s.y_train, 0)
                .and_then(|m| predict_rows(&m, &x_test))
                .map_err(|e| e.to_string())
                .and_then(|preds| compute_metrics_with(&s.y_test, &labels_of(&preds), averaging).map_err(|e| e.to_string()));
            match &result {
                Ok(r) => info!("{set} {kind}: accuracy {:.4} ({:.1?})", r.accuracy, started.elapsed()),
                Err(e) => warn!("{set} {kind} failed: {e}"),
            }
            rows.push(ComparisonRow {
                model: kind,
                feature_set: set,
                split_seed: cfg.split.seed,
                result,
            });
        }
    }
    let out = &cfg.output.dir;
    write_text(&out.join("comparison.tsv"), &comparison_tsv(&rows))?;
    write_text(&out.join("comparison.txt"), &comparison_table(&rows))?;
    write_text(&out.join("plot_data.tsv"), &plot_data_tsv(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------

/// k-fold cross-validation of the configured model over the whole corpus.
/// The feature pipeline is fitted once on all documents; it sees no labels.
pub fn cmd_folds(cfg: &ExperimentConfig) -> Result<CvResult, CliError> {
    cfg.validate()?;
    let set = cfg.feature_set()?;
    let kind = cfg.model_kind()?;
    let params = cfg.hyperparams(kind)?;
    let data = load_dataset(cfg, set.uses_embeddings())?;
    let emb = data.embeddings.as_ref();
    let pipeline = fit_pipeline(cfg, set, &data.corpus.documents, emb)?;
    let x = pipeline.matrix(&data.corpus.documents, emb).map_err(|e| CliError::data("building features", e))?;
    let positions: Vec<usize> = (0..data.labels.len()).collect();
    let folds = make_folds(&positions, &data.labels, cfg.folds.k, cfg.folds.stratified, cfg.folds.seed)
        .map_err(|e| CliError::data("building folds", e))?;
    let cv = cross_validate(kind, &params, &x, &data.labels, &folds, cfg.averaging()?, None)
        .map_err(|e| CliError::training("cross-validation", e))?;

    let out = &cfg.output.dir;
    let mut assign = String::from("id\trow\tlabel\tfold\n");
    for (d, f) in data.corpus.documents.iter().zip(&folds.assignments) {
        let _ = writeln!(assign, "{:016x}\t{}\t{}\t{f}", d.id, d.row, d.label.map(|l| l.as_str()).unwrap_or(""));
    }
    write_text(&out.join("folds.tsv"), &assign)?;
    write_text(&out.join("cv.tsv"), &cv_tsv(&cv))?;
    let header = format!(
        "{kind} on {set}, {} {}-fold cross-validation\n",
        if cfg.folds.stratified { "stratified" } else { "plain" },
        cfg.folds.k
    );
    write_text(&out.join("cv.txt"), &(header + &cv_summary(&cv)))?;
    Ok(cv)
}

// ---------------------------------------------------------------------------

pub const SYNTH_CORPUS: &str = "synthetic_corpus.csv";
pub const SYNTH_EMBEDDINGS: &str = "synthetic_embeddings.emb1";

/// Writes the synthetic benchmark corpus and its pseudo-embeddings.
pub fn cmd_synth(out_dir: &Path, cfg: &SynthConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let s = generate(cfg);
    let mut csv = Vec::new();
    write_csv(&s.rows, &mut csv).map_err(|e| CliError::data("writing corpus", e))?;
    let corpus_path = out_dir.join(SYNTH_CORPUS);
    write_atomic(&corpus_path, &csv)?;
    let emb_path = out_dir.join(SYNTH_EMBEDDINGS);
    let tmp = tempfile::NamedTempFile::new_in(out_dir).map_err(|e| CliError::data("writing embeddings", e))?;
    save_embeddings(tmp.path(), &s.embeddings).map_err(|e| CliError::data("writing embeddings", e))?;
    tmp.persist(&emb_path).map_err(|e| CliError::data("writing embeddings", e))?;
    Ok((corpus_path, emb_path))
}

/// The model inside a bundle, for callers that only need predictions.
pub fn bundle_model(path: &Path) -> Result<TrainedModel, CliError> {
    Ok(load_bundle(path)?.model)
}

/// Kind and width of a bundle's model.
pub fn describe_bundle(path: &Path) -> Result<(ModelKind, FeatureSet, usize), CliError> {
    let b = load_bundle(path)?;
    Ok((b.model.kind(), b.pipeline.feature_set, b.model.n_features()))
}
