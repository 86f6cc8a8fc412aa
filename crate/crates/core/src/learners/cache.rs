//! Memo of fitted base learners, shared between grid cells.
//!
//! Grid cells that differ only in parameters of other learners retrain the
//! same base models on the same folds. A fit is keyed by model kind, the
//! parameters that kind reads, the seed stream and a fingerprint of the
//! training data; training is deterministic, so a hit returns exactly what a
//! fresh fit would.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::features::Matrix;
use crate::label::Label;
use crate::rng::fnv1a64;

use super::{train_model, Hyperparams, LearnerError, ModelKind, TrainedModel};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct FitKey {
    kind: ModelKind,
    /// Bit patterns of the parameters `kind` reads.
    params: Vec<u64>,
    seed: u64,
    stream: u64,
    rows: usize,
    cols: usize,
    data: u64,
}

fn data_fingerprint(x: &Matrix, y: &[Label]) -> u64 {
    let mut bytes = Vec::with_capacity(8 * x.as_slice().len() + y.len());
    for v in x.as_slice() {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    bytes.extend(y.iter().map(|l| l.index() as u8));
    fnv1a64(&bytes)
}

#[derive(Debug, Default)]
pub struct FitCache {
    fits: Mutex<HashMap<FitKey, TrainedModel>>,
    hits: AtomicUsize,
}

impl FitCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fits served from the memo.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.fits.lock().expect("fit cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same result as [`train_model`] for a non-ensemble `kind`.
    pub fn train(&self, kind: ModelKind, params: &Hyperparams, x: &Matrix, y: &[Label], stream: u64) -> Result<TrainedModel, LearnerError> {
        debug_assert!(kind != ModelKind::Cse);
        let key = FitKey {
            kind,
            params: kind
                .valid_keys()
                .iter()
                .map(|k| params.get(k).expect("known key").to_bits())
                .collect(),
            seed: params.seed,
            stream,
            rows: x.n_rows(),
            cols: x.n_cols(),
            data: data_fingerprint(x, y),
        };
        if let Some(m) = self.fits.lock().expect("fit cache poisoned").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(m.clone());
        }
        // Fit outside the lock; a concurrent duplicate fit yields the same model.
        let model = train_model(kind, params, x, y, stream)?;
        self.fits.lock().expect("fit cache poisoned").insert(key, model.clone());
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::blobs;
    use crate::stacking::{train_stacking, train_stacking_cached};

    #[test]
    fn hit_equals_fresh_fit() {
        let (x, y) = blobs(8, 1.5, 4);
        let cache = FitCache::new();
        let p = Hyperparams::default();
        let a = cache.train(ModelKind::AdaBoost, &p, &x, &y, 2).unwrap();
        let b = cache.train(ModelKind::AdaBoost, &p, &x, &y, 2).unwrap();
        assert_eq!(cache.hits(), 1);
        assert_eq!(a, b);
        assert_eq!(a, train_model(ModelKind::AdaBoost, &p, &x, &y, 2).unwrap());

        // Another learner's parameter does not split the key; its own does.
        let other = Hyperparams { knn_k: 7, ..p };
        cache.train(ModelKind::AdaBoost, &other, &x, &y, 2).unwrap();
        assert_eq!(cache.hits(), 2);
        let own = Hyperparams { ada_n_estimators: 3, ..p };
        cache.train(ModelKind::AdaBoost, &own, &x, &y, 2).unwrap();
        cache.train(ModelKind::AdaBoost, &p, &x, &y, 3).unwrap();
        assert_eq!(cache.hits(), 2);
        assert_eq!(cache.len(), 3);
    }

    #[test]
    fn cached_ensemble_matches_uncached() {
        let (x, y) = blobs(10, 2.0, 6);
        let mut p = Hyperparams::default();
        p.gbdt.n_estimators = 5;
        p.bagging.members = 2;
        let cache = FitCache::new();
        let first = train_stacking_cached(&x, &y, &p, Some(&cache)).unwrap();
        let second = train_stacking_cached(&x, &y, &Hyperparams { meta_c: 10.0, ..p }, Some(&cache)).unwrap();
        assert_eq!(first, train_stacking(&x, &y, &p).unwrap());
        assert_eq!(second.bases, first.bases);
        assert!(cache.hits() >= 4 * 6);
    }
}
