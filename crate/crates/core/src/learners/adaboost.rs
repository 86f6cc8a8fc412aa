//! Multiclass AdaBoost (SAMME) over weighted decision trees.

use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};

use super::tree::{fit_classification_tree, ColumnIndex, DecisionTree, TreeParams};
use super::{check_dim, check_training_set, Classifier, LearnerError};

const K: f64 = N_CLASSES as f64;
/// Error used for the stage weight of a perfect stage.
const MIN_STAGE_ERROR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaStage {
    pub tree: DecisionTree,
    pub alpha: f64,
    /// Weighted training error of this stage when it was fitted.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoostModel {
    pub stages: Vec<AdaStage>,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub n_features: usize,
}

/// Stage weight `ln((1 - e) / e) + ln(K - 1)`.
pub fn stage_weight(error: f64) -> f64 {
    let e = error.max(MIN_STAGE_ERROR);
    ((1.0 - e) / e).ln() + (K - 1.0).ln()
}

pub fn train_adaboost(x: &Matrix, y: &[Label], n_estimators: usize, max_depth: usize) -> Result<AdaBoostModel, LearnerError> {
    check_training_set(x, y, 2)?;
    if n_estimators == 0 {
        return Err(LearnerError::BadParameter("adaboost n_estimators must be >= 1".into()));
    }
    let classes = y.iter().map(|l| l.index()).collect::<std::collections::BTreeSet<_>>();
    if classes.len() < 2 {
        return Err(LearnerError::SingleClass);
    }
    let n = x.n_rows();
    let index = ColumnIndex::new(x);
    let params = TreeParams {
        max_depth: max_depth.max(1),
        min_leaf: 1,
    };
    let mut weights = vec![1.0 / n as f64; n];
    let mut stages = Vec::new();
    let chance = 1.0 - 1.0 / K;

    for m in 0..n_estimators {
        let tree = fit_classification_tree(x, &index, y, &weights, params);
        let miss: Vec<bool> = x
            .rows()
            .zip(y)
            .map(|(r, l)| tree.predict_dist(r).argmax() != *l)
            .collect();
        let total: f64 = weights.iter().sum();
        let error = miss.iter().zip(&weights).filter(|(m, _)| **m).map(|(_, w)| w).sum::<f64>() / total;

        if error >= chance - 1e-12 {
            if m == 0 {
                return Err(LearnerError::DegenerateStage { error });
            }
            break;
        }
        let alpha = stage_weight(error);
        stages.push(AdaStage { tree, alpha, error });
        if error <= 0.0 {
            break;
        }
        for (w, &missed) in weights.iter_mut().zip(&miss) {
            if missed {
                *w *= alpha.exp();
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
    }

    Ok(AdaBoostModel {
        stages,
        n_estimators,
        max_depth: params.max_depth,
        n_features: x.n_cols(),
    })
}

impl AdaBoostModel {
    /// Normalized SAMME decision values: each stage votes `1` for its class and
    /// `-1/(K-1)` for the others, weighted by alpha, divided by the alpha sum.
    pub fn decision(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut score = [0.0; N_CLASSES];
        let mut alpha_sum = 0.0;
        for s in &self.stages {
            let k = s.tree.predict_dist(x).argmax().index();
            for (c, v) in score.iter_mut().enumerate() {
                *v += s.alpha * if c == k { 1.0 } else { -1.0 / (K - 1.0) };
            }
            alpha_sum += s.alpha;
        }
        if alpha_sum > 0.0 {
            score.iter_mut().for_each(|v| *v /= alpha_sum);
        }
        score
    }
}

impl Classifier for AdaBoostModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Softmax of the decision values scaled by `1/(K-1)`.
    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        check_dim(self.n_features, x)?;
        Ok(ProbDist::softmax(self.decision(x).map(|v| v / (K - 1.0))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::quadrant_xor;

    fn accuracy(m: &impl Classifier, x: &Matrix, y: &[Label]) -> f64 {
        x.rows().zip(y).filter(|(r, l)| m.predict(r).unwrap().0 == **l).count() as f64 / y.len() as f64
    }

    #[test]
    fn separable_1d_stops_after_one_stage() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0], vec![11.0], vec![12.0]]);
        let y = [
            Label::Negative,
            Label::Negative,
            Label::Negative,
            Label::Positive,
            Label::Positive,
            Label::Positive,
        ];
        let m = train_adaboost(&x, &y, 50, 1).unwrap();
        assert_eq!(m.stages.len(), 1);
        assert_eq!(m.stages[0].error, 0.0);
        assert!(m.stages[0].alpha.is_finite());
        assert_eq!(accuracy(&m, &x, &y), 1.0);
    }

    #[test]
    fn quadrants_need_interactions() {
        // Greedy stumps stall on this pattern; depth-2 trees capture it.
        let (x, y) = quadrant_xor(20, 7);
        let stumps = train_adaboost(&x, &y, 50, 1).unwrap();
        assert!(accuracy(&stumps, &x, &y) <= 0.75);
        let boosted = train_adaboost(&x, &y, 50, 2).unwrap();
        assert!(accuracy(&boosted, &x, &y) >= 0.95, "{}", accuracy(&boosted, &x, &y));
        for s in &boosted.stages {
            assert!(s.error < 1.0 - 1.0 / K);
            assert!(s.alpha.is_finite());
        }
    }

    #[test]
    fn probabilities_are_valid() {
        let (x, y) = quadrant_xor(10, 3);
        let m = train_adaboost(&x, &y, 20, 2).unwrap();
        for r in x.rows() {
            assert!(m.predict_proba(r).unwrap().is_valid(1e-12));
        }
    }

    #[test]
    fn rejects_single_class() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            train_adaboost(&x, &[Label::Neutral, Label::Neutral], 5, 1),
            Err(LearnerError::SingleClass)
        ));
    }

    #[test]
    fn chance_level_first_stage_is_degenerate() {
        let x = Matrix::from_rows(&vec![vec![1.0]; 6]);
        let y = [Label::Negative, Label::Neutral, Label::Positive, Label::Negative, Label::Neutral, Label::Positive];
        match train_adaboost(&x, &y, 5, 1) {
            Err(LearnerError::DegenerateStage { error }) => assert!((error - 2.0 / 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stage_weight_formula() {
        assert!((stage_weight(0.5) - 2f64.ln()).abs() < 1e-15);
        assert!((stage_weight(2.0 / 3.0)).abs() < 1e-15);
    }
}
