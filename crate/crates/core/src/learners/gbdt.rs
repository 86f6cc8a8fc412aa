//! Multiclass gradient boosting on softmax cross-entropy.
//!
//! Each round fits one regression tree per class to the residuals
//! `onehot - p`, splitting on squared error. Leaf values use the diagonal
//! Newton step `(K-1)/K * sum(r) / sum(|r| (1 - |r|))`. Scores start at the
//! class log-priors.
//!
//! The round is applied with the learning rate; if that would raise the
//! training loss the round's multiplier is halved until it no longer does,
//! so the recorded training loss never increases.

use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};

use super::tree::{fit_regression_tree, ColumnIndex, DecisionTree, TreeParams};
use super::{check_dim, check_training_set, Classifier, LearnerError};

const K: f64 = N_CLASSES as f64;
const PRIOR_FLOOR: f64 = 1e-6;
const LOSS_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            learning_rate: 0.01,
            max_depth: 6,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtRound {
    /// One tree per class, in label order.
    pub trees: Vec<DecisionTree>,
    /// Multiplier applied to the tree outputs (the learning rate, possibly
    /// halved by the loss safeguard).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub init_scores: [f64; N_CLASSES],
    pub rounds: Vec<GbdtRound>,
    pub config: GbdtConfig,
    pub n_features: usize,
    /// Mean training log-loss after initialization and after each round.
    pub train_loss: Vec<f64>,
}

fn mean_log_loss(scores: &[[f64; N_CLASSES]], y: &[Label]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(s, l)| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[l.index()]
        })
        .sum::<f64>()
        / y.len() as f64
}

pub fn class_log_priors(y: &[Label]) -> [f64; N_CLASSES] {
    let mut counts = [0.0; N_CLASSES];
    for l in y {
        counts[l.index()] += 1.0;
    }
    let n = y.len() as f64;
    counts.map(|c| (c / n).max(PRIOR_FLOOR).ln())
}

pub fn train_gbdt(x: &Matrix, y: &[Label], config: GbdtConfig) -> Result<GbdtModel, LearnerError> {
    let index = ColumnIndex::new(x);
    train_gbdt_indexed(x, &index, y, config)
}

pub(crate) fn train_gbdt_indexed(
    x: &Matrix,
    index: &ColumnIndex,
    y: &[Label],
    config: GbdtConfig,
) -> Result<GbdtModel, LearnerError> {
    check_training_set(x, y, 1)?;
    if config.n_estimators == 0 {
        return Err(LearnerError::BadParameter("lgbm n_estimators must be >= 1".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(LearnerError::BadParameter(format!(
            "lgbm learning_rate must be > 0, got {}",
            config.learning_rate
        )));
    }
    let n = x.n_rows();
    let init = class_log_priors(y);
    let mut scores = vec![init; n];
    let mut loss = mean_log_loss(&scores, y);
    let mut train_loss = vec![loss];
    let params = TreeParams {
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
    };
    let mut rounds = Vec::with_capacity(config.n_estimators);
    let mut residual = vec![0.0; n];
    let mut outputs = vec![[0.0; N_CLASSES]; n];

    for _ in 0..config.n_estimators {
        let probs: Vec<ProbDist> = scores.iter().map(|s| ProbDist::softmax(*s)).collect();
        let mut trees = Vec::with_capacity(N_CLASSES);
        for k in 0..N_CLASSES {
            for (i, (p, l)) in probs.iter().zip(y).enumerate() {
                residual[i] = f64::from(u8::from(l.index() == k)) - p.0[k];
            }
            let r = &residual;
            let tree = fit_regression_tree(x, index, r, params, |rows| newton_leaf(rows, r));
            for (i, out) in outputs.iter_mut().enumerate() {
                out[k] = tree.predict_scalar(x.row(i));
            }
            trees.push(tree);
        }

        let mut scale = config.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<[f64; N_CLASSES]> = scores
                .iter()
                .zip(&outputs)
                .map(|(s, o)| std::array::from_fn(|k| s[k] + scale * o[k]))
                .collect();
            let trial_loss = mean_log_loss(&trial, y);
            if trial_loss <= loss + LOSS_SLACK {
                accepted = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, trial_loss)) = accepted else {
            break;
        };
        scores = trial;
        loss = trial_loss;
        train_loss.push(loss);
        rounds.push(GbdtRound { trees, scale });
    }

    Ok(GbdtModel {
        init_scores: init,
        rounds,
        config,
        n_features: x.n_cols(),
        train_loss,
    })
}

fn newton_leaf(rows: &[usize], residual: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in rows {
        let r = residual[i];
        num += r;
        den += r.abs() * (1.0 - r.abs());
    }
    if den <= 1e-12 {
        0.0
    } else {
        (K - 1.0) / K * num / den
    }
}

impl GbdtModel {
    pub fn raw_scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        let mut s = self.init_scores;
        for round in &self.rounds {
            for (k, tree) in round.trees.iter().enumerate() {
                s[k] += round.scale * tree.predict_scalar(x);
            }
        }
        s
    }
}

impl Classifier for GbdtModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        check_dim(self.n_features, x)?;
        Ok(ProbDist::softmax(self.raw_scores(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::{blobs, quadrant_xor};

    fn accuracy(m: &GbdtModel, x: &Matrix, y: &[Label]) -> f64 {
        x.rows().zip(y).filter(|(r, l)| m.predict(r).unwrap().0 == **l).count() as f64 / y.len() as f64
    }

    #[test]
    fn blobs_reference_settings() {
        let (x, y) = blobs(30, 1.0, 4);
        let m = train_gbdt(&x, &y, GbdtConfig::default()).unwrap();
        assert_eq!(m.rounds.len(), 50);
        assert!(accuracy(&m, &x, &y) >= 0.95);
    }

    #[test]
    fn loss_never_increases() {
        for (lr, seed) in [(0.01, 1), (0.2, 2), (1.0, 3), (5.0, 4)] {
            let (x, y) = quadrant_xor(15, seed);
            let cfg = GbdtConfig {
                n_estimators: 30,
                learning_rate: lr,
                max_depth: 3,
                min_leaf: 2,
            };
            let m = train_gbdt(&x, &y, cfg).unwrap();
            for w in m.train_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "lr {lr}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn one_round_stays_near_priors() {
        let (x, mut y) = blobs(10, 1.0, 8);
        for l in y.iter_mut().take(25) {
            *l = Label::Negative;
        }
        let m = train_gbdt(&x, &y, GbdtConfig { n_estimators: 1, ..GbdtConfig::default() }).unwrap();
        let priors = ProbDist::softmax(class_log_priors(&y));
        for r in x.rows() {
            let p = m.predict_proba(r).unwrap();
            for k in 0..N_CLASSES {
                assert!((p.0[k] - priors.0[k]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (x, y) = blobs(3, 1.0, 1);
        assert!(train_gbdt(&x, &y, GbdtConfig { n_estimators: 0, ..GbdtConfig::default() }).is_err());
        assert!(train_gbdt(&x, &y, GbdtConfig { learning_rate: 0.0, ..GbdtConfig::default() }).is_err());
    }

    #[test]
    fn log_priors() {
        let y = [Label::Negative, Label::Negative, Label::Positive, Label::Positive];
        let p = class_log_priors(&y);
        assert!((p[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((p[1] - PRIOR_FLOOR.ln()).abs() < 1e-15);
    }
}
