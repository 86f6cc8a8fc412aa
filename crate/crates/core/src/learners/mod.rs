//! From-scratch base classifiers and the shared hyperparameter surface.
//!
//! Hyperparameter keys follow the grid naming used throughout the project
//! (`logreg__C`, `lgbm__n_estimators`, ...). `C` values are inverse
//! regularization strengths: the penalty weight is `1/C`.

pub mod adaboost;
pub mod bagging;
pub mod cache;
pub mod gbdt;
pub mod knn;
pub mod logreg;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::features::Matrix;
use crate::label::{Label, ProbDist};
use crate::stacking::{train_stacking_cached, StackingEnsemble, StackingError};

pub use adaboost::{train_adaboost, AdaBoostModel};
pub use bagging::{train_bagged_gbdt, BaggedModel, BaggingConfig};
pub use cache::FitCache;
pub use gbdt::{train_gbdt, GbdtConfig, GbdtModel};
pub use knn::{train_knn, KnnModel};
pub use logreg::{train_logreg, GdConfig, LogRegModel};
pub use tree::DecisionTree;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training set has {rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("need at least {min} training rows, got {got}")]
    TooFewRows { min: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("loss became non-finite at iteration {iteration}; lower the step size or check inputs")]
    NonFiniteLoss { iteration: usize },
    #[error("input has {got} features, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("k = {k} exceeds the {n} training rows")]
    KTooLarge { k: usize, n: usize },
    #[error("first boosting stage has weighted error {error:.4}, no better than chance")]
    DegenerateStage { error: f64 },
    #[error("{0}")]
    BadParameter(String),
    #[error("unknown parameter {key:?} for {model}; valid keys: {}", valid.join(", "))]
    UnknownParameter { key: String, model: String, valid: Vec<String> },
    #[error(transparent)]
    Stacking(#[from] Box<StackingError>),
}

pub(crate) fn check_training_set(x: &Matrix, y: &[Label], min_rows: usize) -> Result<(), LearnerError> {
    if x.n_rows() != y.len() {
        return Err(LearnerError::LengthMismatch {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    if y.len() < min_rows.max(1) {
        return Err(LearnerError::TooFewRows {
            min: min_rows.max(1),
            got: y.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<(), LearnerError> {
    if x.len() != expected {
        return Err(LearnerError::DimMismatch { expected, got: x.len() });
    }
    Ok(())
}

/// A fitted three-class model.
pub trait Classifier {
    fn n_features(&self) -> usize;

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError>;

    /// Label and distribution; the default takes the argmax with ties to the
    /// lower label index.
    fn predict(&self, x: &[f64]) -> Result<(Label, ProbDist), LearnerError> {
        let p = self.predict_proba(x)?;
        Ok((p.argmax(), p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    LogReg,
    BaggedGbdt,
    Knn,
    AdaBoost,
    Cse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LogReg,
        ModelKind::BaggedGbdt,
        ModelKind::Knn,
        ModelKind::AdaBoost,
        ModelKind::Cse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::BaggedGbdt => "bagged_gbdt",
            ModelKind::Knn => "knn",
            ModelKind::AdaBoost => "adaboost",
            ModelKind::Cse => "cse",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "Logistic Regression",
            ModelKind::BaggedGbdt => "Bagged GBDT",
            ModelKind::Knn => "KNN",
            ModelKind::AdaBoost => "AdaBoost",
            ModelKind::Cse => "CSE",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Hyperparameter keys this model consumes.
    pub fn valid_keys(self) -> Vec<&'static str> {
        let prefixes: &[&str] = match self {
            ModelKind::LogReg => &["logreg__"],
            ModelKind::BaggedGbdt => &["lgbm__", "bagging__"],
            ModelKind::Knn => &["knn__"],
            ModelKind::AdaBoost => &["adaboost__"],
            ModelKind::Cse => &["logreg__", "lgbm__", "bagging__", "knn__", "adaboost__", "final_estimator__", "cse__"],
        };
        Hyperparams::KEYS
            .iter()
            .copied()
            .filter(|k| prefixes.iter().any(|p| k.starts_with(p)))
            .collect()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "logreg" | "logistic_regression" => Ok(ModelKind::LogReg),
            "bagged_gbdt" | "bagging" | "lgbm" => Ok(ModelKind::BaggedGbdt),
            "knn" => Ok(ModelKind::Knn),
            "adaboost" => Ok(ModelKind::AdaBoost),
            "cse" | "stacking" => Ok(ModelKind::Cse),
            other => Err(format!(
                "unknown model {other:?} (expected logreg, bagged_gbdt, knn, adaboost or cse)"
            )),
        }
    }
}

/// Every tunable setting of the five model kinds. Defaults are the best grid
/// values (`C = 0.1`, 50 rounds at rate 0.01, `k = 3`, 50 AdaBoost stages,
/// meta `C = 0.1`) plus fixed structural settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub logreg_c: f64,
    pub logreg_gd: GdConfig,
    pub gbdt: GbdtConfig,
    pub bagging: BaggingConfig,
    pub knn_k: usize,
    pub ada_n_estimators: usize,
    pub ada_max_depth: usize,
    pub meta_c: f64,
    pub cse_folds: usize,
    pub cse_stratified: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            logreg_c: 0.1,
            logreg_gd: GdConfig::default(),
            gbdt: GbdtConfig::default(),
            bagging: BaggingConfig::default(),
            knn_k: 3,
            ada_n_estimators: 50,
            ada_max_depth: 1,
            meta_c: 0.1,
            cse_folds: 5,
            cse_stratified: true,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub const KEYS: [&'static str; 15] = [
        "logreg__C",
        "logreg__max_iter",
        "logreg__tol",
        "lgbm__n_estimators",
        "lgbm__learning_rate",
        "lgbm__max_depth",
        "lgbm__min_leaf",
        "bagging__n_members",
        "bagging__bootstrap",
        "knn__n_neighbors",
        "adaboost__n_estimators",
        "adaboost__max_depth",
        "final_estimator__estimator__C",
        "cse__folds",
        "cse__stratified",
    ];

    /// Sets one key, validating its range. Integer keys reject fractional
    /// values; boolean keys take 0 or 1.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), LearnerError> {
        let bad = |what: &str| LearnerError::BadParameter(format!("{key} {what}, got {value}"));
        let positive = |v: f64| if v > 0.0 && v.is_finite() { Ok(v) } else { Err(bad("must be > 0")) };
        let count = |v: f64, min: f64| {
            if v.fract() == 0.0 && v >= min && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(bad(&format!("must be an integer >= {min}")))
            }
        };
        let flag = |v: f64| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(bad("must be 0 or 1")),
        };
        match key {
            "logreg__C" => self.logreg_c = positive(value)?,
            "logreg__max_iter" => self.logreg_gd.max_iter = count(value, 1.0)?,
            "logreg__tol" => self.logreg_gd.tolerance = positive(value)?,
            "lgbm__n_estimators" => self.gbdt.n_estimators = count(value, 1.0)?,
            "lgbm__learning_rate" => self.gbdt.learning_rate = positive(value)?,
            "lgbm__max_depth" => self.gbdt.max_depth = count(value, 1.0)?,
            "lgbm__min_leaf" => self.gbdt.min_leaf = count(value, 1.0)?,
            "bagging__n_members" => self.bagging.members = count(value, 1.0)?,
            "bagging__bootstrap" => self.bagging.bootstrap = flag(value)?,
            "knn__n_neighbors" => self.knn_k = count(value, 1.0)?,
            "adaboost__n_estimators" => self.ada_n_estimators = count(value, 1.0)?,
            "adaboost__max_depth" => self.ada_max_depth = count(value, 1.0)?,
            "final_estimator__estimator__C" => self.meta_c = positive(value)?,
            "cse__folds" => self.cse_folds = count(value, 2.0)?,
            "cse__stratified" => self.cse_stratified = flag(value)?,
            _ => {
                return Err(LearnerError::UnknownParameter {
                    key: key.to_string(),
                    model: "any model".into(),
                    valid: Self::KEYS.iter().map(|s| s.to_string()).collect(),
                })
            }
        }
        Ok(())
    }

    /// Like [`Hyperparams::set`] but only accepts keys the model consumes.
    pub fn set_for(&mut self, model: ModelKind, key: &str, value: f64) -> Result<(), LearnerError> {
        let valid = model.valid_keys();
        if !valid.contains(&key) {
            return Err(LearnerError::UnknownParameter {
                key: key.to_string(),
                model: model.to_string(),
                valid: valid.iter().map(|s| s.to_string()).collect(),
            });
        }
        self.set(key, value)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "logreg__C" => self.logreg_c,
            "logreg__max_iter" => self.logreg_gd.max_iter as f64,
            "logreg__tol" => self.logreg_gd.tolerance,
            "lgbm__n_estimators" => self.gbdt.n_estimators as f64,
            "lgbm__learning_rate" => self.gbdt.learning_rate,
            "lgbm__max_depth" => self.gbdt.max_depth as f64,
            "lgbm__min_leaf" => self.gbdt.min_leaf as f64,
            "bagging__n_members" => self.bagging.members as f64,
            "bagging__bootstrap" => f64::from(u8::from(self.bagging.bootstrap)),
            "knn__n_neighbors" => self.knn_k as f64,
            "adaboost__n_estimators" => self.ada_n_estimators as f64,
            "adaboost__max_depth" => self.ada_max_depth as f64,
            "final_estimator__estimator__C" => self.meta_c,
            "cse__folds" => self.cse_folds as f64,
            "cse__stratified" => f64::from(u8::from(self.cse_stratified)),
            _ => return None,
        })
    }

    /// `(key, value)` for every key, in [`Hyperparams::KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        Self::KEYS.iter().map(|&k| (k, self.get(k).unwrap())).collect()
    }
}

/// Any of the five trained model kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    LogReg(LogRegModel),
    BaggedGbdt(BaggedModel),
    Knn(KnnModel),
    AdaBoost(AdaBoostModel),
    Cse(StackingEnsemble),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::LogReg(_) => ModelKind::LogReg,
            TrainedModel::BaggedGbdt(_) => ModelKind::BaggedGbdt,
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::AdaBoost(_) => ModelKind::AdaBoost,
            TrainedModel::Cse(_) => ModelKind::Cse,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::LogReg(m) => m,
            TrainedModel::BaggedGbdt(m) => m,
            TrainedModel::Knn(m) => m,
            TrainedModel::AdaBoost(m) => m,
            TrainedModel::Cse(m) => m,
        }
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        self.inner().predict_proba(x)
    }

    fn predict(&self, x: &[f64]) -> Result<(Label, ProbDist), LearnerError> {
        self.inner().predict(x)
    }
}

/// Trains one model of `kind`. `stream` separates the random streams of
/// otherwise identical calls (e.g. different folds).
pub fn train_model(kind: ModelKind, params: &Hyperparams, x: &Matrix, y: &[Label], stream: u64) -> Result<TrainedModel, LearnerError> {
    train_model_cached(kind, params, x, y, stream, None)
}

/// [`train_model`] with ensemble base fits served from `cache` when given.
pub fn train_model_cached(
    kind: ModelKind,
    params: &Hyperparams,
    x: &Matrix,
    y: &[Label],
    stream: u64,
    cache: Option<&FitCache>,
) -> Result<TrainedModel, LearnerError> {
    let seed = crate::rng::derive_seed(params.seed, kind.as_str(), stream);
    Ok(match kind {
        ModelKind::LogReg => TrainedModel::LogReg(train_logreg(x, y, params.logreg_c, params.logreg_gd)?),
        ModelKind::BaggedGbdt => TrainedModel::BaggedGbdt(train_bagged_gbdt(x, y, params.bagging, params.gbdt, seed)?),
        ModelKind::Knn => TrainedModel::Knn(train_knn(x, y, params.knn_k)?),
        ModelKind::AdaBoost => TrainedModel::AdaBoost(train_adaboost(x, y, params.ada_n_estimators, params.ada_max_depth)?),
        ModelKind::Cse => {
            let mut p = *params;
            p.seed = seed;
            TrainedModel::Cse(train_stacking_cached(x, y, &p, cache).map_err(Box::new)?)
        }
    })
}

/// Labels predicted for every row.
pub fn predict_rows(model: &dyn Classifier, x: &Matrix) -> Result<Vec<(Label, ProbDist)>, LearnerError> {
    x.rows().map(|r| model.predict(r)).collect()
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::*;
    use crate::rng::SplitMix64;

    /// Three Gaussian blobs in 2D, well apart for small `spread`.
    pub fn blobs(n_per: usize, spread: f64, seed: u64) -> (Matrix, Vec<Label>) {
        let centers = [[-5.0, 0.0], [5.0, 0.0], [0.0, 8.0]];
        let mut rng = SplitMix64::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..n_per {
                rows.push(vec![c[0] + spread * rng.normal(), c[1] + spread * rng.normal()]);
                y.push(Label::ALL[k]);
            }
        }
        (Matrix::from_rows(&rows), y)
    }

    /// Quadrant pattern: (-,-) Negative, (+,+) Positive, off-diagonal
    /// quadrants Neutral. Points keep a margin of 0.5 from both axes.
    pub fn quadrant_xor(n_per_quadrant: usize, seed: u64) -> (Matrix, Vec<Label>) {
        let mut rng = SplitMix64::new(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (sx, sy, label) in [
            (-1.0, -1.0, Label::Negative),
            (1.0, 1.0, Label::Positive),
            (-1.0, 1.0, Label::Neutral),
            (1.0, -1.0, Label::Neutral),
        ] {
            for _ in 0..n_per_quadrant {
                rows.push(vec![sx * (0.5 + 2.0 * rng.next_f64()), sy * (0.5 + 2.0 * rng.next_f64())]);
                y.push(label);
            }
        }
        (Matrix::from_rows(&rows), y)
    }
}
