//! Confusion matrices and classification metrics.

use std::fmt;

use crate::label::{Label, N_CLASSES};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_labels(y_true: &[Label], y_pred: &[Label]) -> Result<Self, EvalError> {
        if y_true.len() != y_pred.len() {
            return Err(EvalError::LengthMismatch {
                y_true: y_true.len(),
                y_pred: y_pred.len(),
            });
        }
        let mut counts = [[0; N_CLASSES]; N_CLASSES];
        for (t, p) in y_true.iter().zip(y_pred) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..N_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    /// True count of `label` (row sum).
    pub fn support(&self, label: Label) -> usize {
        self.counts[label.index()].iter().sum()
    }

    /// Predicted count of `label` (column sum).
    pub fn predicted(&self, label: Label) -> usize {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Support-weighted mean over classes.
    #[default]
    Weighted,
    /// Unweighted mean over classes that occur in truth or predictions.
    Macro,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Weighted => "weighted",
            Averaging::Macro => "macro",
        }
    }
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            other => Err(format!("unknown averaging {other:?} (expected weighted or macro)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Which undefined ratio was replaced by 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroDivision {
    /// The class was never predicted.
    Precision(Label),
    /// The class never occurs in the truth.
    Recall(Label),
}

impl fmt::Display for ZeroDivision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroDivision::Precision(l) => write!(f, "precision({l}) undefined: no predicted samples, set to 0"),
            ZeroDivision::Recall(l) => write!(f, "recall({l}) undefined: no true samples, set to 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Indexed by label.
    pub per_class: [ClassMetrics; N_CLASSES],
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    pub confusion: ConfusionMatrix,
    pub zero_division: Vec<ZeroDivision>,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    pub fn total(&self) -> usize {
        self.confusion.total()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Weighted-average report.
pub fn compute_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<MetricsReport, EvalError> {
    compute_metrics_with(y_true, y_pred, Averaging::Weighted)
}

pub fn compute_metrics_with(y_true: &[Label], y_pred: &[Label], averaging: Averaging) -> Result<MetricsReport, EvalError> {
    let confusion = ConfusionMatrix::from_labels(y_true, y_pred)?;
    if y_true.is_empty() {
        return Err(EvalError::NoSamples);
    }
    report_from_confusion(confusion, averaging)
}

pub fn report_from_confusion(confusion: ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport, EvalError> {
    let total = confusion.total();
    if total == 0 {
        return Err(EvalError::NoSamples);
    }
    let mut zero_division = Vec::new();
    let mut per_class = [ClassMetrics::default(); N_CLASSES];
    for label in Label::ALL {
        let tp = confusion.counts[label.index()][label.index()];
        let support = confusion.support(label);
        let predicted = confusion.predicted(label);
        let precision = ratio(tp, predicted).unwrap_or_else(|| {
            zero_division.push(ZeroDivision::Precision(label));
            0.0
        });
        let recall = ratio(tp, support).unwrap_or_else(|| {
            zero_division.push(ZeroDivision::Recall(label));
            0.0
        });
        per_class[label.index()] = ClassMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support,
        };
    }

    let weights: [f64; N_CLASSES] = match averaging {
        Averaging::Weighted => per_class.map(|c| c.support as f64 / total as f64),
        Averaging::Macro => {
            let present: Vec<bool> = Label::ALL
                .iter()
                .map(|&l| confusion.support(l) + confusion.predicted(l) > 0)
                .collect();
            let n = present.iter().filter(|p| **p).count() as f64;
            std::array::from_fn(|k| if present[k] { 1.0 / n } else { 0.0 })
        }
    };
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().zip(&weights).map(|(c, w)| w * f(c)).sum::<f64>();
    Ok(MetricsReport {
        accuracy: confusion.trace() as f64 / total as f64,
        per_class,
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
        averaging,
        confusion,
        zero_division,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    #[test]
    fn hand_example() {
        let r = compute_metrics(&[Negative, Negative, Positive, Positive], &[Negative, Positive, Positive, Positive]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        let p = r.class(Positive);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.recall, 1.0);
        assert!((p.f1 - 0.8).abs() < 1e-15);
        // Neutral is neither present nor predicted.
        assert!(r.zero_division.contains(&ZeroDivision::Precision(Neutral)));
        assert!(r.zero_division.contains(&ZeroDivision::Recall(Neutral)));
        assert_eq!(r.class(Neutral).f1, 0.0);
    }

    #[test]
    fn all_neutral_predictor() {
        let y: Vec<Label> = (0..30).map(|i| Label::ALL[i % 3]).collect();
        let r = compute_metrics(&y, &[Neutral; 30]).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.class(Neutral).recall, 1.0);
        assert!((r.class(Neutral).precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.zero_division, vec![ZeroDivision::Precision(Negative), ZeroDivision::Precision(Positive)]);
    }

    #[test]
    fn perfect_prediction() {
        let y = [Negative, Neutral, Positive, Positive];
        let r = compute_metrics(&y, &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn macro_averaging() {
        let r = compute_metrics_with(&[Negative, Negative, Negative, Positive], &[Negative, Negative, Negative, Negative], Averaging::Macro).unwrap();
        // Negative: p = 3/4, r = 1; Positive: p = 0, r = 0. Neutral absent.
        assert!((r.recall - 0.5).abs() < 1e-15);
        assert!((r.precision - 0.375).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(compute_metrics(&[Negative], &[]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(compute_metrics(&[], &[]), Err(EvalError::NoSamples)));
    }

    fn labels(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Label>> {
        prop::collection::vec((0usize..3).prop_map(|i| Label::ALL[i]), n)
    }

    proptest! {
        #[test]
        fn matches_per_sample_counting(pairs in labels(1..80).prop_flat_map(|t| {
            let n = t.len();
            (Just(t), labels(n..n + 1))
        })) {
            let (t, p) = pairs;
            let r = compute_metrics(&t, &p).unwrap();
            let correct = t.iter().zip(&p).filter(|(a, b)| a == b).count();
            prop_assert_eq!(r.accuracy, correct as f64 / t.len() as f64);
            for l in Label::ALL {
                let tp = t.iter().zip(&p).filter(|(a, b)| **a == l && **b == l).count();
                let sup = t.iter().filter(|a| **a == l).count();
                let pred = p.iter().filter(|b| **b == l).count();
                let c = r.class(l);
                prop_assert_eq!(c.support, sup);
                prop_assert_eq!(c.precision, if pred == 0 { 0.0 } else { tp as f64 / pred as f64 });
                prop_assert_eq!(c.recall, if sup == 0 { 0.0 } else { tp as f64 / sup as f64 });
            }
            prop_assert!((r.recall - r.accuracy).abs() < 1e-12);
        }
    }
}
