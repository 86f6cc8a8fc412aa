//! Stacked generalization over the four base learners.
//!
//! Meta-features are out-of-fold class distributions: for every fold the base
//! models are trained on the other folds and predict the held-out rows, so no
//! meta-row ever sees its own label. The meta-model is a one-vs-rest binary
//! logistic regression; at inference its per-class sigmoid scores are
//! normalized to sum to one. Base models are refit on the full training set
//! for inference.

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{make_folds, CorpusError, FoldPlan};
use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};
use crate::learners::logreg::{dot, minimize};
use crate::learners::{check_dim, check_training_set, train_model, Classifier, FitCache, GdConfig, Hyperparams, LearnerError, ModelKind, TrainedModel};
use crate::rng::derive_seed;

/// Base learners in meta-feature column order.
pub const BASE_MODELS: [ModelKind; 4] = [ModelKind::LogReg, ModelKind::BaggedGbdt, ModelKind::Knn, ModelKind::AdaBoost];
pub const META_DIM: usize = BASE_MODELS.len() * N_CLASSES;

#[derive(Debug, Error)]
pub enum StackingError {
    #[error("cannot build stacking folds: {0}")]
    Folds(#[from] CorpusError),
    #[error("{model} failed{}: {source}", fold.map(|f| format!(" on fold {f}")).unwrap_or_default())]
    Base {
        model: ModelKind,
        fold: Option<usize>,
        source: LearnerError,
    },
    #[error("meta-model failed: {0}")]
    Meta(LearnerError),
}

/// Out-of-fold meta-features, `N x 12`, rows aligned with the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    pub rows: Matrix,
    pub folds: FoldPlan,
}

/// Fold plan used by [`build_meta_features`].
pub fn stacking_folds(y: &[Label], params: &Hyperparams) -> Result<FoldPlan, StackingError> {
    let indices: Vec<usize> = (0..y.len()).collect();
    Ok(make_folds(
        &indices,
        y,
        params.cse_folds,
        params.cse_stratified,
        derive_seed(params.seed, "cse-folds", 0),
    )?)
}

fn base_row(models: &[TrainedModel], x: &[f64]) -> Result<[f64; META_DIM], LearnerError> {
    let mut row = [0.0; META_DIM];
    for (m, model) in models.iter().enumerate() {
        let p = model.predict_proba(x)?;
        row[m * N_CLASSES..(m + 1) * N_CLASSES].copy_from_slice(&p.0);
    }
    Ok(row)
}

fn train_bases(
    x: &Matrix,
    y: &[Label],
    params: &Hyperparams,
    stream: u64,
    fold: Option<usize>,
    cache: Option<&FitCache>,
) -> Result<Vec<TrainedModel>, StackingError> {
    BASE_MODELS
        .iter()
        .map(|&kind| {
            match cache {
                Some(c) => c.train(kind, params, x, y, stream),
                None => train_model(kind, params, x, y, stream),
            }
            .map_err(|source| StackingError::Base { model: kind, fold, source })
        })
        .collect()
}

pub fn build_meta_features(x: &Matrix, y: &[Label], params: &Hyperparams) -> Result<MetaFeatures, StackingError> {
    let folds = stacking_folds(y, params)?;
    build_meta_features_with_folds(x, y, &folds, params)
}

/// Meta-features for an explicit fold plan over positions `0..N`.
pub fn build_meta_features_with_folds(
    x: &Matrix,
    y: &[Label],
    folds: &FoldPlan,
    params: &Hyperparams,
) -> Result<MetaFeatures, StackingError> {
    meta_features_cached(x, y, folds, params, None)
}

fn meta_features_cached(
    x: &Matrix,
    y: &[Label],
    folds: &FoldPlan,
    params: &Hyperparams,
    cache: Option<&FitCache>,
) -> Result<MetaFeatures, StackingError> {
    let per_fold = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_positions(f);
            let test = folds.test_positions(f);
            let xs = x.select_rows(&train);
            let ys: Vec<Label> = train.iter().map(|&i| y[i]).collect();
            let models = train_bases(&xs, &ys, params, f as u64, Some(f), cache)?;
            test.iter()
                .map(|&i| {
                    base_row(&models, x.row(i)).map(|r| (i, r)).map_err(|source| StackingError::Base {
                        model: ModelKind::Cse,
                        fold: Some(f),
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Matrix::zeros(x.n_rows(), META_DIM);
    for (i, r) in per_fold.into_iter().flatten() {
        rows.row_mut(i).copy_from_slice(&r);
    }
    Ok(MetaFeatures {
        rows,
        folds: folds.clone(),
    })
}

/// One binary logistic regression per class.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrLogReg {
    /// Row-major `N_CLASSES x n_features`.
    pub weights: Vec<f64>,
    pub bias: [f64; N_CLASSES],
    pub c: f64,
    pub n_features: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy + `||w||^2 / (2 C N)` at `theta = [w | b]`, with
/// its gradient.
pub fn binary_objective(theta: &[f64], x: &Matrix, target: &[bool], c: f64, with_grad: bool) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let (w, b) = (&theta[..d], theta[d]);
    let mut grad = if with_grad { vec![0.0; d + 1] } else { Vec::new() };
    let mut loss = 0.0;
    for (row, &t) in x.rows().zip(target) {
        let z = dot(w, row) + b;
        loss += if t { softplus(-z) } else { softplus(z) };
        if with_grad {
            let r = sigmoid(z) - f64::from(u8::from(t));
            for (g, &v) in grad[..d].iter_mut().zip(row) {
                *g += r * v;
            }
            grad[d] += r;
        }
    }
    let penalty = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c * n);
    if with_grad {
        for (g, &wv) in grad[..d].iter_mut().zip(w) {
            *g = *g / n + wv / (c * n);
        }
        grad[d] /= n;
    }
    (loss / n + penalty, grad)
}

pub fn train_ovr(x: &Matrix, y: &[Label], c: f64, gd: GdConfig) -> Result<OvrLogReg, LearnerError> {
    check_training_set(x, y, 1)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(LearnerError::BadParameter(format!("final estimator C must be > 0, got {c}")));
    }
    let d = x.n_cols();
    let mut weights = Vec::with_capacity(N_CLASSES * d);
    let mut bias = [0.0; N_CLASSES];
    for (k, b) in bias.iter_mut().enumerate() {
        let target: Vec<bool> = y.iter().map(|l| l.index() == k).collect();
        let min = minimize(
            vec![0.0; d + 1],
            gd,
            |t| binary_objective(t, x, &target, c, false).0,
            |t| binary_objective(t, x, &target, c, true),
        )?;
        weights.extend_from_slice(&min.theta[..d]);
        *b = min.theta[d];
    }
    Ok(OvrLogReg {
        weights,
        bias,
        c,
        n_features: d,
    })
}

impl OvrLogReg {
    /// Per-class sigmoid scores before normalization.
    pub fn scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let d = self.n_features;
        std::array::from_fn(|k| sigmoid(dot(&self.weights[k * d..(k + 1) * d], x) + self.bias[k]))
    }
}

impl Classifier for OvrLogReg {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        check_dim(self.n_features, x)?;
        Ok(ProbDist::from_scores(self.scores(x)))
    }
}

/// Trained stacking ensemble: four refit base models and the meta-model.
#[derive(Debug, Clone, PartialEq)]
pub struct StackingEnsemble {
    /// In [`BASE_MODELS`] order.
    pub bases: Vec<TrainedModel>,
    pub meta: OvrLogReg,
    pub params: Hyperparams,
    pub n_features: usize,
}

pub fn train_stacking(x: &Matrix, y: &[Label], params: &Hyperparams) -> Result<StackingEnsemble, StackingError> {
    train_stacking_cached(x, y, params, None)
}

/// [`train_stacking`] with base fits served from `cache` when given.
pub fn train_stacking_cached(
    x: &Matrix,
    y: &[Label],
    params: &Hyperparams,
    cache: Option<&FitCache>,
) -> Result<StackingEnsemble, StackingError> {
    check_training_set(x, y, 2).map_err(|source| StackingError::Base {
        model: ModelKind::Cse,
        fold: None,
        source,
    })?;
    let folds = stacking_folds(y, params)?;
    let meta_features = meta_features_cached(x, y, &folds, params, cache)?;
    let meta = train_ovr(&meta_features.rows, y, params.meta_c, params.logreg_gd).map_err(StackingError::Meta)?;
    let bases = train_bases(x, y, params, params.cse_folds as u64, None, cache)?;
    Ok(StackingEnsemble {
        bases,
        meta,
        params: *params,
        n_features: x.n_cols(),
    })
}

impl StackingEnsemble {
    /// Concatenated base distributions for one input.
    pub fn meta_row(&self, x: &[f64]) -> Result<[f64; META_DIM], LearnerError> {
        check_dim(self.n_features, x)?;
        base_row(&self.bases, x)
    }
}

impl Classifier for StackingEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        let row = self.meta_row(x)?;
        self.meta.predict_proba(&row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::{blobs, quadrant_xor};

    fn fast_params() -> Hyperparams {
        let mut p = Hyperparams::default();
        p.gbdt.n_estimators = 10;
        p.gbdt.learning_rate = 0.3;
        p.gbdt.max_depth = 3;
        p.gbdt.min_leaf = 2;
        p.bagging.members = 3;
        p.ada_n_estimators = 20;
        p.seed = 17;
        p
    }

    #[test]
    fn meta_rows_are_distributions_in_base_order() {
        let (x, y) = blobs(15, 1.0, 2);
        let m = build_meta_features(&x, &y, &fast_params()).unwrap();
        assert_eq!((m.rows.n_rows(), m.rows.n_cols()), (45, 12));
        for r in m.rows.rows() {
            for b in 0..4 {
                let p = ProbDist([r[3 * b], r[3 * b + 1], r[3 * b + 2]]);
                assert!(p.is_valid(1e-9), "{r:?}");
            }
        }
    }

    #[test]
    fn held_out_labels_do_not_reach_their_meta_rows() {
        let (x, y) = quadrant_xor(12, 4);
        let params = fast_params();
        let folds = stacking_folds(&y, &params).unwrap();
        let before = build_meta_features_with_folds(&x, &y, &folds, &params).unwrap();
        for f in 0..folds.k {
            let mut mutated = y.clone();
            for i in folds.test_positions(f) {
                mutated[i] = Label::ALL[(mutated[i].index() + 1) % 3];
            }
            let after = build_meta_features_with_folds(&x, &mutated, &folds, &params).unwrap();
            for i in folds.test_positions(f) {
                assert_eq!(before.rows.row(i), after.rows.row(i));
            }
        }
    }

    #[test]
    fn ovr_probabilities_and_fit() {
        let (x, y) = blobs(20, 0.7, 5);
        let m = train_ovr(&x, &y, 1.0, GdConfig::default()).unwrap();
        let mut correct = 0;
        for (r, l) in x.rows().zip(&y) {
            let (pred, p) = m.predict(r).unwrap();
            assert!(p.is_valid(1e-12));
            correct += usize::from(pred == *l);
        }
        assert!(correct as f64 / y.len() as f64 >= 0.95);
    }

    #[test]
    fn binary_gradient_matches_finite_differences() {
        let (x, y) = blobs(4, 1.0, 3);
        let t: Vec<bool> = y.iter().map(|l| *l == Label::Neutral).collect();
        let theta = vec![0.3, -0.2, 0.1];
        let (_, g) = binary_objective(&theta, &x, &t, 0.5, true);
        for i in 0..3 {
            let h = 1e-6;
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (binary_objective(&p, &x, &t, 0.5, false).0 - binary_objective(&m, &x, &t, 0.5, false).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn ensemble_predicts_and_is_deterministic() {
        let (x, y) = quadrant_xor(10, 9);
        let params = fast_params();
        let a = train_stacking(&x, &y, &params).unwrap();
        let b = train_stacking(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bases.len(), 4);
        let correct = x.rows().zip(&y).filter(|(r, l)| a.predict(r).unwrap().0 == **l).count();
        assert!(correct as f64 / y.len() as f64 >= 0.9);
    }

    #[test]
    fn base_failure_names_model_and_fold() {
        let (x, y) = blobs(3, 1.0, 1);
        let mut params = fast_params();
        params.knn_k = 50;
        let err = train_stacking(&x, &y, &params).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("knn") && msg.contains("fold"), "{msg}");
    }
}
