use std::fmt;
use std::str::FromStr;

/// Number of sentiment classes.
pub const N_CLASSES: usize = 3;

/// Sentiment class. The index mapping is fixed everywhere: files, reports,
/// probability vectors and meta-features all use Negative=0, Neutral=1,
/// Positive=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Label {
    pub const ALL: [Label; N_CLASSES] = [Label::Negative, Label::Neutral, Label::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Neutral => "neutral",
            Label::Positive => "positive",
        }
    }

    /// Case-insensitive parse of English and Spanish label names.
    pub fn parse(raw: &str) -> Option<Label> {
        match raw.trim().to_lowercase().as_str() {
            "negative" | "negativo" | "negativa" => Some(Label::Negative),
            "neutral" | "neutro" | "neutra" => Some(Label::Neutral),
            "positive" | "positivo" | "positiva" => Some(Label::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label {:?}", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::parse(s).ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Probability distribution over the three classes, in label-index order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbDist(pub [f64; N_CLASSES]);

impl ProbDist {
    pub const UNIFORM: ProbDist = ProbDist([1.0 / 3.0; N_CLASSES]);

    pub fn probs(&self) -> &[f64; N_CLASSES] {
        &self.0
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    /// Normalizes non-negative scores; all-zero scores become uniform.
    pub fn from_scores(scores: [f64; N_CLASSES]) -> ProbDist {
        let total: f64 = scores.iter().sum();
        if total > 0.0 && total.is_finite() {
            ProbDist(scores.map(|s| s / total))
        } else {
            ProbDist::UNIFORM
        }
    }

    /// Numerically stable softmax.
    pub fn softmax(logits: [f64; N_CLASSES]) -> ProbDist {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = logits.map(|z| (z - max).exp());
        let total: f64 = exp.iter().sum();
        ProbDist(exp.map(|e| e / total))
    }

    /// Most probable label; ties go to the lower label index.
    pub fn argmax(&self) -> Label {
        let mut best = 0;
        for k in 1..N_CLASSES {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        Label::ALL[best]
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Arithmetic mean of several distributions.
    pub fn mean<'a>(dists: impl IntoIterator<Item = &'a ProbDist>) -> ProbDist {
        let mut acc = [0.0; N_CLASSES];
        let mut n = 0usize;
        for d in dists {
            for (a, p) in acc.iter_mut().zip(d.0) {
                *a += p;
            }
            n += 1;
        }
        if n == 0 {
            return ProbDist::UNIFORM;
        }
        ProbDist(acc.map(|a| a / n as f64))
    }
}
