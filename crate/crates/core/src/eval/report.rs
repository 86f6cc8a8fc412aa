//! Text and tab-separated renderings of evaluation results.
//!
//! Text reports round to two decimals; TSV files keep full precision (the
//! shortest representation that parses back to the same `f64`).

use std::fmt::Write as _;

use crate::features::FeatureSet;
use crate::label::Label;
use crate::learners::ModelKind;

use super::cv::CvResult;
use super::grid::GridResult;
use super::metrics::MetricsReport;
use super::EvalError;

/// Class rows appear positive first, as in the usual sentiment tables.
const REPORT_ORDER: [Label; 3] = [Label::Positive, Label::Neutral, Label::Negative];

fn capitalized(label: Label) -> &'static str {
    match label {
        Label::Negative => "Negative",
        Label::Neutral => "Neutral",
        Label::Positive => "Positive",
    }
}

/// Aligned per-class report with an overall accuracy line.
pub fn classification_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>10}{:>10}{:>10}{:>10}", "Class", "Precision", "Recall", "F1-score", "Support");
    for label in REPORT_ORDER {
        let c = report.class(label);
        let _ = writeln!(
            s,
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
            capitalized(label),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
    let _ = writeln!(
        s,
        "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
        format!("{} avg", report.averaging.as_str()),
        report.precision,
        report.recall,
        report.f1,
        report.total()
    );
    let _ = writeln!(s, "Overall Accuracy: {:.1}%", 100.0 * report.accuracy);
    for z in &report.zero_division {
        let _ = writeln!(s, "note: {z}");
    }
    s
}

/// `metric<TAB>value` lines: accuracy, averaged metrics, per-class metrics
/// and the confusion matrix (`confusion_<true>_<predicted>`).
pub fn metrics_tsv(report: &MetricsReport) -> String {
    let mut s = String::from("metric\tvalue\n");
    let avg = report.averaging.as_str();
    let _ = writeln!(s, "accuracy\t{}", report.accuracy);
    let _ = writeln!(s, "precision_{avg}\t{}", report.precision);
    let _ = writeln!(s, "recall_{avg}\t{}", report.recall);
    let _ = writeln!(s, "f1_{avg}\t{}", report.f1);
    let _ = writeln!(s, "samples\t{}", report.total());
    for label in Label::ALL {
        let c = report.class(label);
        let _ = writeln!(s, "precision_{label}\t{}", c.precision);
        let _ = writeln!(s, "recall_{label}\t{}", c.recall);
        let _ = writeln!(s, "f1_{label}\t{}", c.f1);
        let _ = writeln!(s, "support_{label}\t{}", c.support);
    }
    for t in Label::ALL {
        for p in Label::ALL {
            let _ = writeln!(s, "confusion_{t}_{p}\t{}", report.confusion.counts[t.index()][p.index()]);
        }
    }
    s
}

/// Value of one metric from [`metrics_tsv`] output.
pub fn metric_from_tsv(tsv: &str, metric: &str) -> Option<f64> {
    tsv.lines()
        .skip(1)
        .filter_map(|l| l.split_once('\t'))
        .find(|(k, _)| *k == metric)
        .and_then(|(_, v)| v.parse().ok())
}

/// Per-fold metrics plus mean and population standard deviation.
pub fn cv_tsv(cv: &CvResult) -> String {
    let mut s = String::from("fold\taccuracy\tprecision\trecall\tf1\tsamples\n");
    for (i, r) in cv.folds.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{}\t{}\t{}\t{}\t{}", r.accuracy, r.precision, r.recall, r.f1, r.total());
    }
    let total: usize = cv.folds.iter().map(|r| r.total()).sum();
    let _ = writeln!(s, "mean\t{}\t{}\t{}\t{}\t{total}", cv.mean_accuracy, cv.mean_precision, cv.mean_recall, cv.mean_f1);
    let _ = writeln!(s, "std\t{}\t\t\t{}\t", cv.std_accuracy, cv.std_f1);
    s
}

pub fn cv_summary(cv: &CvResult) -> String {
    let mut s = String::new();
    for (i, r) in cv.folds.iter().enumerate() {
        let _ = writeln!(s, "fold {i}: accuracy {:.2}  f1 {:.2}  (n = {})", r.accuracy, r.f1, r.total());
    }
    let _ = writeln!(s, "mean accuracy {:.2} +/- {:.2}", cv.mean_accuracy, cv.std_accuracy);
    let _ = writeln!(s, "mean f1       {:.2} +/- {:.2}", cv.mean_f1, cv.std_f1);
    s
}

/// One (model, feature set) cell of a comparison run.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub feature_set: FeatureSet,
    pub split_seed: u64,
    /// The failure message when the cell could not be trained or scored.
    pub result: Result<MetricsReport, String>,
}

impl ComparisonRow {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.accuracy)
    }
}

/// Accuracy of one cell, if it ran.
pub fn comparison_accuracy(rows: &[ComparisonRow], model: ModelKind, feature_set: FeatureSet) -> Option<f64> {
    rows.iter()
        .find(|r| r.model == model && r.feature_set == feature_set)
        .and_then(ComparisonRow::accuracy)
}

pub fn comparison_tsv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("feature_set\tmodel\taccuracy\tprecision\trecall\tf1\tsplit_seed\tstatus\n");
    for r in rows {
        match &r.result {
            Ok(m) => {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\tok",
                    r.feature_set, r.model, m.accuracy, m.precision, m.recall, m.f1, r.split_seed
                );
            }
            Err(e) => {
                let msg = e.replace(['\t', '\n'], " ");
                let _ = writeln!(s, "{}\t{}\t\t\t\t\t{}\terror: {msg}", r.feature_set, r.model, r.split_seed);
            }
        }
    }
    s
}

/// Table with one section per feature set and one row per model.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<22}{:>10}{:>11}{:>8}{:>10}", "Model", "Accuracy", "Precision", "Recall", "F1-Score");
    let mut sets: Vec<FeatureSet> = Vec::new();
    for r in rows {
        if !sets.contains(&r.feature_set) {
            sets.push(r.feature_set);
        }
    }
    for set in sets {
        let _ = writeln!(s, "[{set}]");
        for r in rows.iter().filter(|r| r.feature_set == set) {
            match &r.result {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{:<22}{:>10.2}{:>11.2}{:>8.2}{:>10.2}",
                        r.model.display_name(),
                        m.accuracy,
                        m.precision,
                        m.recall,
                        m.f1
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{:<22}  failed: {e}", r.model.display_name());
                }
            }
        }
    }
    s
}

/// `model<TAB>feature_set<TAB>accuracy` rows for external charting.
pub fn plot_data_tsv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("model\tfeature_set\taccuracy\n");
    for r in rows {
        if let Some(a) = r.accuracy() {
            let _ = writeln!(s, "{}\t{}\t{a}", r.model, r.feature_set);
        }
    }
    s
}

/// One row per grid cell, in enumeration order.
pub fn grid_cells_tsv(result: &GridResult) -> Result<String, EvalError> {
    let first = result.cells.first().ok_or(EvalError::EmptyGrid)?;
    let mut s = String::from("cell");
    for (k, _) in &first.params {
        s.push('\t');
        s.push_str(k);
    }
    s.push_str("\tmean_accuracy\tstd_accuracy\tmean_f1\tscore\tbest\n");
    for c in &result.cells {
        let _ = write!(s, "{}", c.index);
        for (_, v) in &c.params {
            let _ = write!(s, "\t{v}");
        }
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}",
            c.cv.mean_accuracy,
            c.cv.std_accuracy,
            c.cv.mean_f1,
            c.score,
            u8::from(c.index == result.best)
        );
    }
    Ok(s)
}
