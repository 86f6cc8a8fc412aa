//! Exhaustive hyperparameter grid search scored by cross-validation.

use rayon::prelude::*;

use crate::corpus::FoldPlan;
use crate::features::Matrix;
use crate::label::Label;
use crate::learners::{FitCache, Hyperparams, LearnerError, ModelKind};

use super::cv::{cross_validate_cached, CvResult, TrainingCounter};
use super::metrics::Averaging;
use super::EvalError;

/// Parameter name to candidate values, in enumeration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub params: Vec<(String, Vec<f64>)>,
}

impl GridSpec {
    pub fn new(params: Vec<(String, Vec<f64>)>) -> Self {
        Self { params }
    }

    /// The six-parameter CSE grid: 3 * 3 * 3 * 3 * 3 * 4 = 972 cells.
    pub fn full() -> Self {
        Self::new(vec![
            ("logreg__C".into(), vec![0.01, 0.1, 10.0]),
            ("lgbm__n_estimators".into(), vec![50.0, 100.0, 200.0]),
            ("lgbm__learning_rate".into(), vec![0.01, 0.1, 0.2]),
            ("knn__n_neighbors".into(), vec![3.0, 5.0, 7.0]),
            ("adaboost__n_estimators".into(), vec![50.0, 100.0, 200.0]),
            ("final_estimator__estimator__C".into(), vec![0.01, 0.1, 1.0, 10.0]),
        ])
    }

    pub fn n_cells(&self) -> usize {
        self.params.iter().map(|(_, v)| v.len()).product()
    }

    /// Cell `index` of the Cartesian product; the last parameter varies
    /// fastest.
    pub fn cell(&self, mut index: usize) -> Vec<(String, f64)> {
        let mut out = vec![(String::new(), 0.0); self.params.len()];
        for (slot, (key, values)) in out.iter_mut().zip(&self.params).rev() {
            *slot = (key.clone(), values[index % values.len()]);
            index /= values.len();
        }
        out
    }

    pub fn cells(&self) -> impl Iterator<Item = Vec<(String, f64)>> + '_ {
        (0..self.n_cells()).map(|i| self.cell(i))
    }

    /// Checks that the grid is non-empty and every key applies to `kind`.
    pub fn validate(&self, kind: ModelKind) -> Result<(), EvalError> {
        if self.params.is_empty() || self.n_cells() == 0 {
            return Err(EvalError::EmptyGrid);
        }
        let mut probe = Hyperparams::default();
        for (key, values) in &self.params {
            for &v in values {
                probe.set_for(kind, key, v)?;
            }
        }
        Ok(())
    }

    /// `base` with the cell's values applied.
    pub fn apply(&self, base: &Hyperparams, kind: ModelKind, cell: &[(String, f64)]) -> Result<Hyperparams, LearnerError> {
        let mut h = *base;
        for (k, v) in cell {
            h.set_for(kind, k, *v)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    #[default]
    Accuracy,
    WeightedF1,
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::Accuracy => "accuracy",
            Selection::WeightedF1 => "weighted_f1",
        }
    }

    fn score(self, cv: &CvResult) -> f64 {
        match self {
            Selection::Accuracy => cv.mean_accuracy,
            Selection::WeightedF1 => cv.mean_f1,
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Selection::Accuracy),
            "weighted_f1" | "f1" => Ok(Selection::WeightedF1),
            other => Err(format!("unknown selection metric {other:?} (expected accuracy or weighted_f1)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub cv: CvResult,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub model: ModelKind,
    pub selection: Selection,
    pub cells: Vec<GridCell>,
    /// Index of the first cell with the maximal score.
    pub best: usize,
    /// True when another cell ties the best score.
    pub tie: bool,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Evaluates every cell with [`cross_validate`] on the same fold plan.
/// Cells run in parallel; the merged result is in enumeration order.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    grid: &GridSpec,
    base: &Hyperparams,
    kind: ModelKind,
    x: &Matrix,
    y: &[Label],
    folds: &FoldPlan,
    selection: Selection,
    counter: Option<&TrainingCounter>,
) -> Result<GridResult, EvalError> {
    grid.validate(kind)?;
    let cache = FitCache::new();
    let cells = (0..grid.n_cells())
        .into_par_iter()
        .map(|i| {
            let params = grid.cell(i);
            let h = grid.apply(base, kind, &params)?;
            let cv = cross_validate_cached(kind, &h, x, y, folds, Averaging::Weighted, counter, Some(&cache))
                .map_err(|e| EvalError::Cell { index: i, source: Box::new(e) })?;
            let score = selection.score(&cv);
            Ok(GridCell { index: i, params, cv, score })
        })
        .collect::<Vec<Result<_, EvalError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.score > cells[best].score {
            best = i;
        }
    }
    let tie = cells.iter().enumerate().any(|(i, c)| i != best && c.score == cells[best].score);
    Ok(GridResult {
        model: kind,
        selection,
        cells,
        best,
        tie,
    })
}
