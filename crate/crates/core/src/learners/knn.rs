//! Brute-force k-nearest-neighbours under Euclidean distance.

use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};

use super::{check_dim, check_training_set, Classifier, LearnerError};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<Label>,
}

/// One neighbour: training index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

pub fn train_knn(x: &Matrix, y: &[Label], k: usize) -> Result<KnnModel, LearnerError> {
    check_training_set(x, y, 1)?;
    if k == 0 {
        return Err(LearnerError::BadParameter("knn k must be >= 1".into()));
    }
    if k > x.n_rows() {
        return Err(LearnerError::KTooLarge { k, n: x.n_rows() });
    }
    Ok(KnnModel {
        k,
        x: x.clone(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    /// The k nearest training points, nearest first; equal distances are
    /// ordered by training index.
    pub fn neighbors(&self, query: &[f64]) -> Result<Vec<Neighbor>, LearnerError> {
        check_dim(self.x.n_cols(), query)?;
        let mut all: Vec<(f64, usize)> = self
            .x
            .rows()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < all.len() {
            all.select_nth_unstable_by(self.k - 1, cmp);
            all.truncate(self.k);
        }
        all.sort_by(cmp);
        Ok(all
            .into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn vote(&self, neighbors: &[Neighbor]) -> ([usize; N_CLASSES], [f64; N_CLASSES]) {
        let mut votes = [0usize; N_CLASSES];
        let mut dist = [0.0; N_CLASSES];
        for n in neighbors {
            let c = self.y[n.index].index();
            votes[c] += 1;
            dist[c] += n.distance;
        }
        (votes, dist)
    }
}

impl Classifier for KnnModel {
    fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    /// Neighbour vote fractions.
    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        let nb = self.neighbors(x)?;
        let (votes, _) = self.vote(&nb);
        Ok(ProbDist(votes.map(|v| v as f64 / nb.len() as f64)))
    }

    /// Majority vote; ties go to the smaller summed neighbour distance, then
    /// to the lower label index.
    fn predict(&self, x: &[f64]) -> Result<(Label, ProbDist), LearnerError> {
        let nb = self.neighbors(x)?;
        let (votes, dist) = self.vote(&nb);
        let mut best = 0;
        for k in 1..N_CLASSES {
            let better = votes[k] > votes[best] || (votes[k] == votes[best] && dist[k] < dist[best]);
            if better {
                best = k;
            }
        }
        let probs = ProbDist(votes.map(|v| v as f64 / nb.len() as f64));
        Ok((Label::ALL[best], probs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[(f64, Label)]) -> (Matrix, Vec<Label>) {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.0]).collect();
        (Matrix::from_rows(&rows), points.iter().map(|p| p.1).collect())
    }

    #[test]
    fn exact_match_k1() {
        let (x, y) = line(&[(0.0, Label::Negative), (5.0, Label::Positive)]);
        let m = train_knn(&x, &y, 1).unwrap();
        let (label, p) = m.predict(&[5.0]).unwrap();
        assert_eq!(label, Label::Positive);
        assert_eq!(p.0, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn vote_fractions() {
        let (x, y) = line(&[
            (1.0, Label::Positive),
            (2.0, Label::Positive),
            (3.0, Label::Negative),
            (100.0, Label::Neutral),
        ]);
        let m = train_knn(&x, &y, 3).unwrap();
        let p = m.predict_proba(&[0.0]).unwrap();
        assert!((p.0[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.0[1], 0.0);
        assert!((p.0[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distance_tie_prefers_lower_index() {
        let (x, y) = line(&[(-1.0, Label::Neutral), (1.0, Label::Positive)]);
        let m = train_knn(&x, &y, 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]).unwrap()[0].index, 0);
        assert_eq!(m.predict(&[0.0]).unwrap().0, Label::Neutral);
    }

    #[test]
    fn vote_tie_prefers_closer_class_then_lower_label() {
        let (x, y) = line(&[(1.0, Label::Positive), (-2.0, Label::Negative)]);
        let m = train_knn(&x, &y, 2).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap().0, Label::Positive);
        let (x, y) = line(&[(1.0, Label::Positive), (-1.0, Label::Negative)]);
        let m = train_knn(&x, &y, 2).unwrap();
        assert_eq!(m.predict(&[0.0]).unwrap().0, Label::Negative);
    }

    #[test]
    fn k_too_large() {
        let (x, y) = line(&[(1.0, Label::Positive)]);
        assert!(matches!(train_knn(&x, &y, 2), Err(LearnerError::KTooLarge { k: 2, n: 1 })));
    }
}
