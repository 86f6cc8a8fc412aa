//! Bootstrap-aggregated gradient boosting.

use rayon::prelude::*;

use crate::features::Matrix;
use crate::label::{Label, ProbDist};
use crate::rng::{derive_seed, SplitMix64};

use super::gbdt::{train_gbdt, GbdtConfig, GbdtModel};
use super::{check_dim, check_training_set, Classifier, LearnerError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaggingConfig {
    pub members: usize,
    /// When false every member sees the full training set in order.
    pub bootstrap: bool,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self {
            members: 10,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedModel {
    pub members: Vec<GbdtModel>,
    /// Bootstrap stream seed of each member.
    pub seeds: Vec<u64>,
    pub bagging: BaggingConfig,
    pub n_features: usize,
}

/// Bootstrap resample of size `n`, drawn with replacement.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| rng.below(n as u64) as usize).collect()
}

pub fn train_bagged_gbdt(
    x: &Matrix,
    y: &[Label],
    bagging: BaggingConfig,
    gbdt: GbdtConfig,
    seed: u64,
) -> Result<BaggedModel, LearnerError> {
    check_training_set(x, y, 1)?;
    if bagging.members == 0 {
        return Err(LearnerError::BadParameter("bagging needs at least one member".into()));
    }
    let n = x.n_rows();
    let seeds: Vec<u64> = (0..bagging.members as u64)
        .map(|m| derive_seed(seed, "bagging", m))
        .collect();
    let members = seeds
        .par_iter()
        .map(|&s| {
            if bagging.bootstrap {
                let idx = bootstrap_indices(n, s);
                let xs = x.select_rows(&idx);
                let ys: Vec<Label> = idx.iter().map(|&i| y[i]).collect();
                train_gbdt(&xs, &ys, gbdt)
            } else {
                train_gbdt(x, y, gbdt)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BaggedModel {
        members,
        seeds,
        bagging,
        n_features: x.n_cols(),
    })
}

impl Classifier for BaggedModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        check_dim(self.n_features, x)?;
        let dists = self
            .members
            .iter()
            .map(|m| m.predict_proba(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ProbDist::mean(&dists))
    }
}
