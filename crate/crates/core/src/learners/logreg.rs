//! Multinomial (softmax) logistic regression trained by full-batch gradient
//! descent with backtracking line search.
//!
//! Objective: mean softmax cross-entropy + `||W||^2 / (2 C N)`, bias
//! unregularized. `C` is the inverse regularization strength.

use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};

use super::{check_dim, check_training_set, Classifier, LearnerError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub max_iter: usize,
    /// Stop once the gradient infinity-norm falls below this.
    pub tolerance: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    /// Row-major `N_CLASSES x n_features`.
    pub weights: Vec<f64>,
    pub bias: [f64; N_CLASSES],
    pub c: f64,
    pub n_features: usize,
    pub gd: GdConfig,
    pub iterations: usize,
    pub final_loss: f64,
}

impl LogRegModel {
    /// All-zero parameters.
    pub fn zeros(n_features: usize, c: f64) -> Self {
        Self {
            weights: vec![0.0; N_CLASSES * n_features],
            bias: [0.0; N_CLASSES],
            c,
            n_features,
            gd: GdConfig::default(),
            iterations: 0,
            final_loss: f64::NAN,
        }
    }

    fn logits(&self, x: &[f64]) -> [f64; N_CLASSES] {
        logits(&self.weights, &self.bias, x)
    }
}

fn logits(w: &[f64], b: &[f64; N_CLASSES], x: &[f64]) -> [f64; N_CLASSES] {
    let d = x.len();
    let mut z = *b;
    for (k, zk) in z.iter_mut().enumerate() {
        *zk += dot(&w[k * d..(k + 1) * d], x);
    }
    z
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flat parameter vector `[W row-major | b]`.
pub fn pack(w: &[f64], b: &[f64; N_CLASSES]) -> Vec<f64> {
    let mut theta = w.to_vec();
    theta.extend_from_slice(b);
    theta
}

fn split_params(theta: &[f64]) -> (&[f64], [f64; N_CLASSES]) {
    let (w, b) = theta.split_at(theta.len() - N_CLASSES);
    (w, [b[0], b[1], b[2]])
}

/// Regularized objective at `theta = [W | b]`.
pub fn objective(theta: &[f64], x: &Matrix, y: &[Label], c: f64) -> f64 {
    let (w, b) = split_params(theta);
    let n = x.n_rows() as f64;
    let mut loss = 0.0;
    for (row, label) in x.rows().zip(y) {
        let z = logits(w, &b, row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[label.index()];
    }
    loss / n + w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c * n)
}

/// Objective and its analytic gradient.
pub fn objective_and_gradient(theta: &[f64], x: &Matrix, y: &[Label], c: f64) -> (f64, Vec<f64>) {
    let (w, b) = split_params(theta);
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for (row, label) in x.rows().zip(y) {
        let z = logits(w, &b, row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[label.index()];
        for k in 0..N_CLASSES {
            let p = (z[k] - lse).exp();
            let r = p - if k == label.index() { 1.0 } else { 0.0 };
            if r != 0.0 {
                for (g, &xv) in grad[k * d..(k + 1) * d].iter_mut().zip(row) {
                    *g += r * xv;
                }
            }
            grad[N_CLASSES * d + k] += r;
        }
    }
    let reg = 1.0 / (c * n);
    for (g, &wv) in grad[..N_CLASSES * d].iter_mut().zip(w) {
        *g = *g / n + reg * wv;
    }
    for g in &mut grad[N_CLASSES * d..] {
        *g /= n;
    }
    let penalty = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c * n);
    (loss / n + penalty, grad)
}

/// Outcome of [`minimize`].
pub(crate) struct Minimum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Gradient descent with Armijo backtracking. Each iteration starts from twice
/// the previously accepted step.
pub(crate) fn minimize(
    mut theta: Vec<f64>,
    gd: GdConfig,
    mut f: impl FnMut(&[f64]) -> f64,
    mut fg: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> Result<Minimum, LearnerError> {
    let mut step = 1.0;
    let mut iterations = 0;
    let (mut value, mut grad) = fg(&theta);
    if !value.is_finite() {
        return Err(LearnerError::NonFiniteLoss { iteration: 0 });
    }
    let mut candidate = vec![0.0; theta.len()];
    while iterations < gd.max_iter {
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < gd.tolerance {
            break;
        }
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            for ((c, t), g) in candidate.iter_mut().zip(&theta).zip(&grad) {
                *c = t - step * g;
            }
            let v = f(&candidate);
            if v.is_finite() && v <= value - 0.5 * step * gnorm2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // Step underflow: no representable descent left.
            break;
        }
        std::mem::swap(&mut theta, &mut candidate);
        let (v, g) = fg(&theta);
        if !v.is_finite() {
            return Err(LearnerError::NonFiniteLoss { iteration: iterations });
        }
        value = v;
        grad = g;
    }
    Ok(Minimum {
        theta,
        value,
        iterations,
    })
}

pub fn train_logreg(x: &Matrix, y: &[Label], c: f64, gd: GdConfig) -> Result<LogRegModel, LearnerError> {
    check_training_set(x, y, 3)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(LearnerError::BadParameter(format!("logreg C must be > 0, got {c}")));
    }
    let distinct = y.iter().map(|l| l.index()).collect::<std::collections::BTreeSet<_>>();
    if distinct.len() < 2 {
        return Err(LearnerError::SingleClass);
    }
    let d = x.n_cols();
    let theta0 = vec![0.0; N_CLASSES * d + N_CLASSES];
    let min = minimize(
        theta0,
        gd,
        |t| objective(t, x, y, c),
        |t| objective_and_gradient(t, x, y, c),
    )?;
    let (w, b) = split_params(&min.theta);
    Ok(LogRegModel {
        weights: w.to_vec(),
        bias: b,
        c,
        n_features: d,
        gd,
        iterations: min.iterations,
        final_loss: min.value,
    })
}

impl Classifier for LogRegModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbDist, LearnerError> {
        check_dim(self.n_features, x)?;
        Ok(ProbDist::softmax(self.logits(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testdata::blobs;
    use crate::rng::SplitMix64;

    #[test]
    fn zero_model_is_uniform() {
        let m = LogRegModel::zeros(4, 1.0);
        let p = m.predict_proba(&[3.0, -1.0, 0.0, 7.0]).unwrap();
        for v in p.0 {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(m.predict_proba(&[1.0]), Err(LearnerError::DimMismatch { expected: 4, got: 1 })));
    }

    #[test]
    fn separates_blobs() {
        let (x, y) = blobs(20, 0.5, 3);
        let m = train_logreg(&x, &y, 0.1, GdConfig::default()).unwrap();
        let correct = x.rows().zip(&y).filter(|(r, l)| m.predict(r).unwrap().0 == **l).count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = blobs(5, 1.5, 11);
        let mut rng = SplitMix64::new(5);
        for _ in 0..5 {
            let theta: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
            let (_, g) = objective_and_gradient(&theta, &x, &y, 0.7);
            for i in 0..theta.len() {
                let h = 1e-5;
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (objective(&plus, &x, &y, 0.7) - objective(&minus, &x, &y, 0.7)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn rejects_single_class_and_bad_c() {
        let (x, _) = blobs(2, 1.0, 1);
        let y = vec![Label::Neutral; 6];
        assert!(matches!(train_logreg(&x, &y, 1.0, GdConfig::default()), Err(LearnerError::SingleClass)));
        let (x, y) = blobs(2, 1.0, 1);
        assert!(train_logreg(&x, &y, 0.0, GdConfig::default()).is_err());
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, y) = blobs(10, 1.0, 9);
        let weak = train_logreg(&x, &y, 10.0, GdConfig::default()).unwrap();
        let strong = train_logreg(&x, &y, 0.01, GdConfig::default()).unwrap();
        let norm = |m: &LogRegModel| m.weights.iter().map(|w| w * w).sum::<f64>();
        assert!(norm(&strong) < norm(&weak));
    }
}
