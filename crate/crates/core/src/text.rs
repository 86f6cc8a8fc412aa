//! Tokenization and TF-IDF.
//!
//! The weighting is pinned: raw term counts, smoothed
//! `idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1`, then L2 row normalization.
//! Vocabulary columns are assigned in lexicographic token order so fitted
//! models are bit-identical across runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TfidfError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("no token reaches min_df = {min_df}")]
    EmptyVocabulary { min_df: usize },
    #[error("stored idf for {token:?} does not match its document frequency")]
    IdfMismatch { token: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfidfConfig {
    pub min_df: usize,
    pub ngram_max: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            min_df: 1,
            ngram_max: 1,
        }
    }
}

/// Splits on maximal runs of non-alphanumeric characters, lowercases, and
/// appends word n-grams (joined by one space) up to `ngram_max`: all unigrams
/// first, then all bigrams, and so on.
pub fn tokenize(text: &str, ngram_max: usize) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut tokens = words.clone();
    for n in 2..=ngram_max.max(1) {
        if n > words.len() {
            break;
        }
        tokens.extend(words.windows(n).map(|w| w.join(" ")));
    }
    tokens
}

/// Smoothed inverse document frequency.
pub fn smoothed_idf(n_docs: usize, doc_freq: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + doc_freq as f64)).ln() + 1.0
}

/// Sparse row: strictly increasing indices, nonzero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    /// Tokens in column order.
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    idf: Vec<f64>,
    n_docs: usize,
    config: TfidfConfig,
}

impl TfidfModel {
    pub fn fit<'a>(
        docs: impl IntoIterator<Item = &'a str>,
        config: TfidfConfig,
    ) -> Result<Self, TfidfError> {
        if config.ngram_max == 0 {
            return Err(TfidfError::BadConfig("ngram_max must be >= 1".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<String> = tokenize(doc, config.ngram_max).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(TfidfError::EmptyCorpus);
        }
        let pairs: Vec<(String, usize)> = df
            .into_iter()
            .filter(|&(_, c)| c >= config.min_df)
            .collect();
        if pairs.is_empty() {
            return Err(TfidfError::EmptyVocabulary {
                min_df: config.min_df,
            });
        }
        Ok(Self::from_parts(pairs, n_docs, config))
    }

    /// Rebuilds a model from `(token, doc_freq)` pairs; idf is recomputed.
    pub fn from_parts(mut pairs: Vec<(String, usize)>, n_docs: usize, config: TfidfConfig) -> Self {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let (tokens, doc_freq): (Vec<String>, Vec<usize>) = pairs.into_iter().unzip();
        let idf = doc_freq.iter().map(|&d| smoothed_idf(n_docs, d)).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            doc_freq,
            idf,
            n_docs,
            config,
        }
    }

    /// Checks stored idf values against the ones implied by the document
    /// frequencies.
    pub fn verify_idf(&self, stored: &[f64]) -> Result<(), TfidfError> {
        for (i, (&s, &expected)) in stored.iter().zip(&self.idf).enumerate() {
            if s.to_bits() != expected.to_bits() {
                return Err(TfidfError::IdfMismatch {
                    token: self.tokens[i].clone(),
                });
            }
        }
        if stored.len() != self.idf.len() {
            return Err(TfidfError::IdfMismatch {
                token: String::from("<length>"),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.tokens.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn config(&self) -> TfidfConfig {
        self.config
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.column(token).map(|i| self.idf[i])
    }

    /// Count x idf per in-vocabulary token, L2-normalized. Unknown tokens are
    /// ignored; a text with none yields the zero vector.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text, self.config.ngram_max) {
            if let Some(&col) = self.index.get(&tok) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(col, c)| (col, c * self.idf[col]))
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector {
            dim: self.dim(),
            entries,
        }
    }
}
