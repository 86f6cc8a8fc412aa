//! k-fold cross-validation over a feature matrix.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::corpus::FoldPlan;
use crate::features::Matrix;
use crate::label::Label;
use crate::learners::{predict_rows, train_model_cached, FitCache, Hyperparams, ModelKind};

use super::metrics::{compute_metrics_with, Averaging, MetricsReport};
use super::EvalError;

/// Counts model training runs issued by the evaluation harness.
#[derive(Debug, Default)]
pub struct TrainingCounter(AtomicUsize);

impl TrainingCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }

    fn record(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub folds: Vec<MetricsReport>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CvResult {
    pub fn from_folds(folds: Vec<MetricsReport>) -> Self {
        let (mean_accuracy, std_accuracy) = mean_std(folds.iter().map(|r| r.accuracy));
        let (mean_f1, std_f1) = mean_std(folds.iter().map(|r| r.f1));
        let (mean_precision, _) = mean_std(folds.iter().map(|r| r.precision));
        let (mean_recall, _) = mean_std(folds.iter().map(|r| r.recall));
        Self {
            folds,
            mean_accuracy,
            std_accuracy,
            mean_precision,
            mean_recall,
            mean_f1,
            std_f1,
        }
    }
}

/// Trains on the complement of every fold and scores the fold. Row `i` of
/// `x` is fold-plan position `i`. Folds run in parallel; each fold's model
/// uses the random stream of its fold index, so results match a sequential
/// run.
pub fn cross_validate(
    kind: ModelKind,
    params: &Hyperparams,
    x: &Matrix,
    y: &[Label],
    folds: &FoldPlan,
    averaging: Averaging,
    counter: Option<&TrainingCounter>,
) -> Result<CvResult, EvalError> {
    cross_validate_cached(kind, params, x, y, folds, averaging, counter, None)
}

/// [`cross_validate`] with ensemble base fits served from `cache`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cross_validate_cached(
    kind: ModelKind,
    params: &Hyperparams,
    x: &Matrix,
    y: &[Label],
    folds: &FoldPlan,
    averaging: Averaging,
    counter: Option<&TrainingCounter>,
    cache: Option<&FitCache>,
) -> Result<CvResult, EvalError> {
    if folds.len() != x.n_rows() || y.len() != x.n_rows() {
        return Err(EvalError::FoldPlanMismatch {
            plan: folds.len(),
            rows: x.n_rows(),
        });
    }
    let reports = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_positions(f);
            let test = folds.test_positions(f);
            let xs = x.select_rows(&train);
            let ys: Vec<Label> = train.iter().map(|&i| y[i]).collect();
            if let Some(c) = counter {
                c.record();
            }
            let fold_err = |source| EvalError::Fold { fold: f, source };
            let model = train_model_cached(kind, params, &xs, &ys, f as u64, cache).map_err(fold_err)?;
            let preds = predict_rows(&model, &x.select_rows(&test)).map_err(fold_err)?;
            let y_pred: Vec<Label> = preds.iter().map(|(l, _)| *l).collect();
            let y_true: Vec<Label> = test.iter().map(|&i| y[i]).collect();
            compute_metrics_with(&y_true, &y_pred, averaging)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CvResult::from_folds(reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::make_folds;
    use crate::learners::testdata::blobs;

    fn plan(y: &[Label], k: usize, stratified: bool) -> FoldPlan {
        let idx: Vec<usize> = (0..y.len()).collect();
        make_folds(&idx, y, k, stratified, 3).unwrap()
    }

    #[test]
    fn constant_labels_give_perfect_folds() {
        let (x, _) = blobs(5, 1.0, 1);
        let y = vec![Label::Positive; 15];
        let folds = plan(&y, 5, false);
        let cv = cross_validate(ModelKind::Knn, &Hyperparams::default(), &x, &y, &folds, Averaging::Weighted, None).unwrap();
        assert!(cv.folds.iter().all(|r| r.accuracy == 1.0));
        assert_eq!(cv.std_accuracy, 0.0);
    }

    #[test]
    fn aggregate_is_fold_mean_and_runs_are_counted() {
        let (x, y) = blobs(12, 3.0, 2);
        let folds = plan(&y, 4, true);
        let counter = TrainingCounter::new();
        let cv = cross_validate(ModelKind::LogReg, &Hyperparams::default(), &x, &y, &folds, Averaging::Weighted, Some(&counter)).unwrap();
        assert_eq!(counter.count(), 4);
        let mean = cv.folds.iter().map(|r| r.accuracy).sum::<f64>() / 4.0;
        assert!((cv.mean_accuracy - mean).abs() < 1e-12);
        assert_eq!(cv.folds.iter().map(|r| r.total()).sum::<usize>(), 36);
    }

    #[test]
    fn fold_errors_carry_the_fold() {
        let (x, y) = blobs(4, 1.0, 2);
        let folds = plan(&y, 2, true);
        let p = Hyperparams {
            knn_k: 7,
            ..Hyperparams::default()
        };
        match cross_validate(ModelKind::Knn, &p, &x, &y, &folds, Averaging::Weighted, None) {
            Err(EvalError::Fold { fold: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
