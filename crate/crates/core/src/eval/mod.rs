//! Metrics, cross-validation, grid search and report rendering.

pub mod cv;
pub mod grid;
pub mod metrics;
pub mod report;

use thiserror::Error;

use crate::learners::LearnerError;

pub use cv::{cross_validate, CvResult, TrainingCounter};
pub use grid::{grid_search, GridCell, GridResult, GridSpec, Selection};
pub use metrics::{compute_metrics, compute_metrics_with, Averaging, ClassMetrics, ConfusionMatrix, MetricsReport, ZeroDivision};
pub use report::ComparisonRow;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{y_true} true labels but {y_pred} predictions")]
    LengthMismatch { y_true: usize, y_pred: usize },
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("fold plan covers {plan} positions but the matrix has {rows} rows")]
    FoldPlanMismatch { plan: usize, rows: usize },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: LearnerError },
    #[error("grid cell {index}: {source}")]
    Cell { index: usize, source: Box<EvalError> },
    #[error("grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Parameter(#[from] LearnerError),
}
