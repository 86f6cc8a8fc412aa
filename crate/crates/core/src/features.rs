//! Feature pipeline: TF-IDF, optional embedding block, dense design matrix.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::Document;
use crate::embedding::{fit_scaler, fuse, DenseScaler, DenseVector, EmbeddingError, EmbeddingTable, FusedVector};
use crate::text::{TfidfConfig, TfidfError, TfidfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSet {
    Tfidf,
    TfidfEmb,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 2] = [FeatureSet::Tfidf, FeatureSet::TfidfEmb];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Tfidf => "tfidf",
            FeatureSet::TfidfEmb => "tfidf+emb",
        }
    }

    pub fn uses_embeddings(self) -> bool {
        self == FeatureSet::TfidfEmb
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "tfidf" => Ok(FeatureSet::Tfidf),
            "tfidf+emb" | "tfidf+bert" => Ok(FeatureSet::TfidfEmb),
            other => Err(format!("unknown feature set {other:?} (expected tfidf or tfidf+emb)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("feature set tfidf+emb needs an embeddings table")]
    EmbeddingsRequired,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Wraps row-major data; `None` unless `data.len() == rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (rows.checked_mul(cols) == Some(data.len())).then_some(Self { rows, cols, data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn from_fused(rows: &[FusedVector]) -> Self {
        let cols = rows.first().map_or(0, FusedVector::total_dim);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.total_dim(), cols, "ragged rows");
            r.write_dense(m.row_mut(i));
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Gathers rows (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Fitted text-to-vector pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    pub feature_set: FeatureSet,
    pub tfidf: TfidfModel,
    /// Present when the embedding block is standardized.
    pub scaler: Option<DenseScaler>,
    /// Embedding width; 0 for the TF-IDF-only feature set.
    pub emb_dim: usize,
}

impl FeaturePipeline {
    /// Fits TF-IDF (and the embedding scaler when requested) on training
    /// documents only.
    pub fn fit(
        docs: &[Document],
        feature_set: FeatureSet,
        tfidf_config: TfidfConfig,
        embeddings: Option<&EmbeddingTable>,
        standardize: bool,
    ) -> Result<Self, FeatureError> {
        let tfidf = TfidfModel::fit(docs.iter().map(|d| d.text.as_str()), tfidf_config)?;
        let (scaler, emb_dim) = if feature_set.uses_embeddings() {
            let table = embeddings.ok_or(FeatureError::EmbeddingsRequired)?;
            let ids: Vec<u64> = docs.iter().map(|d| d.id).collect();
            require_embeddings(table, docs)?;
            let scaler = if standardize { Some(fit_scaler(table, &ids)?) } else { None };
            (scaler, table.dim)
        } else {
            (None, 0)
        };
        Ok(Self {
            feature_set,
            tfidf,
            scaler,
            emb_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.tfidf.dim() + self.emb_dim
    }

    pub fn transform(&self, text: &str, embedding: Option<&DenseVector>) -> Result<FusedVector, FeatureError> {
        let sparse = self.tfidf.transform(text);
        if !self.feature_set.uses_embeddings() {
            return Ok(FusedVector::sparse_only(sparse));
        }
        let emb = embedding.ok_or(FeatureError::EmbeddingsRequired)?;
        if emb.len() != self.emb_dim {
            return Err(EmbeddingError::LengthMismatch {
                expected: self.emb_dim,
                got: emb.len(),
            }
            .into());
        }
        Ok(fuse(sparse, emb, self.scaler.as_ref())?)
    }

    pub fn transform_docs(&self, docs: &[Document], embeddings: Option<&EmbeddingTable>) -> Result<Vec<FusedVector>, FeatureError> {
        if self.feature_set.uses_embeddings() {
            let table = embeddings.ok_or(FeatureError::EmbeddingsRequired)?;
            require_embeddings(table, docs)?;
        }
        docs.iter()
            .map(|d| {
                let emb = match (self.feature_set.uses_embeddings(), embeddings) {
                    (true, Some(t)) => Some(t.get(d.id)?),
                    _ => None,
                };
                self.transform(&d.text, emb)
            })
            .collect()
    }

    pub fn matrix(&self, docs: &[Document], embeddings: Option<&EmbeddingTable>) -> Result<Matrix, FeatureError> {
        let rows = self.transform_docs(docs, embeddings)?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.dim()));
        }
        Ok(Matrix::from_fused(&rows))
    }
}

/// Fails on the first document without an embedding, naming its row.
pub fn require_embeddings(table: &EmbeddingTable, docs: &[Document]) -> Result<(), EmbeddingError> {
    for d in docs {
        if !table.rows.contains_key(&d.id) {
            let snippet: String = d.text.chars().take(40).collect();
            return Err(EmbeddingError::MissingEmbedding {
                id: d.id,
                context: Some(format!("row {}: {:?}", d.row, snippet)),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{preprocess, LabeledCorpus};
    use crate::embedding::Pooling;
    use crate::label::Label;

    fn corpus() -> LabeledCorpus {
        preprocess(&LabeledCorpus::from_pairs([
            ("buena atención", Label::Positive),
            ("mala comida", Label::Negative),
            ("precio normal", Label::Neutral),
        ]))
    }

    fn embeddings(c: &LabeledCorpus) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2, Pooling::MeanPool, "m");
        for (i, d) in c.documents.iter().enumerate() {
            t.insert(d.id, DenseVector(vec![i as f32 * 10.0, 5.0])).unwrap();
        }
        t
    }

    #[test]
    fn tfidf_only_matrix() {
        let c = corpus();
        let p = FeaturePipeline::fit(&c.documents, FeatureSet::Tfidf, TfidfConfig::default(), None, true).unwrap();
        let m = p.matrix(&c.documents, None).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_cols(), 6);
        for r in m.rows() {
            let norm: f64 = r.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fused_matrix_appends_standardized_block() {
        let c = corpus();
        let t = embeddings(&c);
        let p = FeaturePipeline::fit(&c.documents, FeatureSet::TfidfEmb, TfidfConfig::default(), Some(&t), true).unwrap();
        assert_eq!(p.dim(), 8);
        let m = p.matrix(&c.documents, Some(&t)).unwrap();
        let col: Vec<f64> = (0..3).map(|i| m.get(i, 6)).collect();
        assert!(col.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!((0..3).map(|i| m.get(i, 7)).collect::<Vec<_>>(), vec![0.0; 3]);
    }

    #[test]
    fn embeddings_are_required() {
        let c = corpus();
        let err = FeaturePipeline::fit(&c.documents, FeatureSet::TfidfEmb, TfidfConfig::default(), None, true).unwrap_err();
        assert!(matches!(err, FeatureError::EmbeddingsRequired));
        let mut t = embeddings(&c);
        let first = c.documents[0].id;
        t.rows.remove(&first);
        let err = FeaturePipeline::fit(&c.documents, FeatureSet::TfidfEmb, TfidfConfig::default(), Some(&t), true).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn parses_feature_sets() {
        assert_eq!("tfidf".parse::<FeatureSet>().unwrap(), FeatureSet::Tfidf);
        assert_eq!("TFIDF+EMB".parse::<FeatureSet>().unwrap(), FeatureSet::TfidfEmb);
        assert!("bert".parse::<FeatureSet>().is_err());
    }
}
