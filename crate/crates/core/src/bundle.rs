//! Versioned binary container for a fitted pipeline and model.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CSEB" | u16 version | u32 manifest_len | manifest (UTF-8 key=value lines)
//! repeated: u16 name_len | name | u64 len | bytes
//! ```
//!
//! Sections are `config` (the experiment config text, whose FNV-1a hash the
//! manifest records), `pipeline` and `model`. Every float is stored as f64le.
//! The manifest repeats seeds, hyperparameters and the corpus fingerprint in
//! readable form for auditing.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::embedding::DenseScaler;
use crate::features::{FeaturePipeline, FeatureSet, Matrix};
use crate::label::{Label, ProbDist, N_CLASSES};
use crate::learners::adaboost::AdaStage;
use crate::learners::gbdt::GbdtRound;
use crate::learners::tree::{LeafValue, Node};
use crate::learners::{
    AdaBoostModel, BaggedModel, BaggingConfig, Classifier, DecisionTree, GbdtConfig, GbdtModel, GdConfig, Hyperparams, KnnModel,
    LogRegModel, ModelKind, TrainedModel,
};
use crate::rng::fnv1a64;
use crate::stacking::{OvrLogReg, StackingEnsemble};
use crate::text::{TfidfConfig, TfidfError, TfidfModel};

pub const MAGIC: &[u8; 4] = b"CSEB";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error("unsupported bundle version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u16),
    #[error("bundle truncated while reading {0}")]
    Truncated(&'static str),
    #[error("invalid {what} tag {tag}")]
    BadTag { what: &'static str, tag: u8 },
    #[error("bundle has no {0:?} section")]
    MissingSection(&'static str),
    #[error("config hash mismatch: manifest says {manifest:016x}, config section hashes to {actual:016x}")]
    ConfigHash { manifest: u64, actual: u64 },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("inconsistent bundle: {0}")]
    Invalid(String),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error("cannot read bundle {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Where a bundle came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainingProvenance {
    /// Full experiment config text.
    pub config_text: String,
    pub corpus_fingerprint: u64,
    pub split_seed: u64,
    pub fold_seed: u64,
    pub model_seed: u64,
    /// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH` (0 when
    /// unset) so identical runs give identical bytes.
    pub created_unix: u64,
}

impl TrainingProvenance {
    pub fn config_hash(&self) -> u64 {
        fnv1a64(self.config_text.as_bytes())
    }
}

/// Reproducible creation time: `SOURCE_DATE_EPOCH` if set and numeric, else 0.
pub fn reproducible_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub pipeline: FeaturePipeline,
    pub model: TrainedModel,
    pub provenance: TrainingProvenance,
}

// ---------------------------------------------------------------------------
// Primitive codec

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(BundleError::Truncated(self.what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], BundleError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, BundleError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, BundleError> {
        usize::try_from(self.u64()?).map_err(|_| BundleError::Truncated(self.what))
    }
    /// A length prefix, rejected early when it cannot fit in the remaining
    /// bytes at `elem` bytes per element.
    fn len(&mut self, elem: usize) -> Result<usize, BundleError> {
        let n = self.usize()?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(BundleError::Truncated(self.what));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, BundleError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, BundleError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn bool(&mut self) -> Result<bool, BundleError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(BundleError::BadTag { what: "bool", tag }),
        }
    }
    fn str(&mut self) -> Result<String, BundleError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| BundleError::Invalid(format!("non-UTF-8 string in {}", self.what)))
    }
    fn finish(&self) -> Result<(), BundleError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(BundleError::Invalid(format!("{} trailing bytes in {}", self.buf.len() - self.pos, self.what)))
        }
    }
}

fn label_from(tag: u8) -> Result<Label, BundleError> {
    Label::from_index(tag as usize).ok_or(BundleError::BadTag { what: "label", tag })
}

// ---------------------------------------------------------------------------
// Pipeline

fn write_pipeline(w: &mut Writer, p: &FeaturePipeline) {
    w.u8(match p.feature_set {
        FeatureSet::Tfidf => 0,
        FeatureSet::TfidfEmb => 1,
    });
    let cfg = p.tfidf.config();
    w.usize(cfg.min_df);
    w.usize(cfg.ngram_max);
    w.usize(p.tfidf.n_docs());
    w.usize(p.tfidf.dim());
    for (t, &df) in p.tfidf.tokens().iter().zip(p.tfidf.doc_freq()) {
        w.str(t);
        w.usize(df);
    }
    w.f64s(p.tfidf.idf());
    w.usize(p.emb_dim);
    match &p.scaler {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            w.f64s(&s.mean);
            w.f64s(&s.stdev);
        }
    }
}

fn read_pipeline(r: &mut Reader) -> Result<FeaturePipeline, BundleError> {
    let feature_set = match r.u8()? {
        0 => FeatureSet::Tfidf,
        1 => FeatureSet::TfidfEmb,
        tag => return Err(BundleError::BadTag { what: "feature set", tag }),
    };
    let config = TfidfConfig {
        min_df: r.usize()?,
        ngram_max: r.usize()?,
    };
    let n_docs = r.usize()?;
    let n_tokens = r.len(16)?;
    let pairs = (0..n_tokens)
        .map(|_| Ok((r.str()?, r.usize()?)))
        .collect::<Result<Vec<_>, BundleError>>()?;
    if pairs.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(BundleError::Invalid("vocabulary is not strictly sorted".into()));
    }
    let tfidf = TfidfModel::from_parts(pairs, n_docs, config);
    tfidf.verify_idf(&r.f64s()?)?;
    let emb_dim = r.usize()?;
    let scaler = match r.u8()? {
        0 => None,
        1 => Some(DenseScaler {
            mean: r.f64s()?,
            stdev: r.f64s()?,
        }),
        tag => return Err(BundleError::BadTag { what: "scaler", tag }),
    };
    if let Some(s) = &scaler {
        if s.mean.len() != emb_dim || s.stdev.len() != emb_dim {
            return Err(BundleError::Invalid("scaler width differs from embedding width".into()));
        }
    }
    if feature_set == FeatureSet::Tfidf && (emb_dim != 0 || scaler.is_some()) {
        return Err(BundleError::Invalid("tfidf pipeline carries an embedding block".into()));
    }
    Ok(FeaturePipeline {
        feature_set,
        tfidf,
        scaler,
        emb_dim,
    })
}

// ---------------------------------------------------------------------------
// Models

fn write_params(w: &mut Writer, h: &Hyperparams) {
    for (_, v) in h.entries() {
        w.f64(v);
    }
    w.u64(h.seed);
}

fn read_params(r: &mut Reader) -> Result<Hyperparams, BundleError> {
    let mut h = Hyperparams::default();
    for key in Hyperparams::KEYS {
        let v = r.f64()?;
        h.set(key, v).map_err(|e| BundleError::Invalid(e.to_string()))?;
    }
    h.seed = r.u64()?;
    Ok(h)
}

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.usize(t.max_depth);
    w.usize(t.nodes.len());
    for n in &t.nodes {
        match n {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(0);
                w.usize(*feature);
                w.f64(*threshold);
                w.usize(*left);
                w.usize(*right);
            }
            Node::Leaf(LeafValue::Dist(p)) => {
                w.u8(1);
                p.0.iter().for_each(|&v| w.f64(v));
            }
            Node::Leaf(LeafValue::Scalar(v)) => {
                w.u8(2);
                w.f64(*v);
            }
        }
    }
}

fn read_tree(r: &mut Reader, n_features: usize) -> Result<DecisionTree, BundleError> {
    let max_depth = r.usize()?;
    let n = r.len(9)?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => Node::Split {
                feature: r.usize()?,
                threshold: r.f64()?,
                left: r.usize()?,
                right: r.usize()?,
            },
            1 => Node::Leaf(LeafValue::Dist(ProbDist([r.f64()?, r.f64()?, r.f64()?]))),
            2 => Node::Leaf(LeafValue::Scalar(r.f64()?)),
            tag => return Err(BundleError::BadTag { what: "tree node", tag }),
        });
    }
    // Children must point forward so prediction always terminates.
    for (i, node) in nodes.iter().enumerate() {
        if let Node::Split { feature, left, right, .. } = *node {
            if feature >= n_features || left <= i || right <= i || left >= n || right >= n {
                return Err(BundleError::Invalid(format!("tree node {i} has invalid links")));
            }
        }
    }
    if nodes.is_empty() {
        return Err(BundleError::Invalid("empty tree".into()));
    }
    Ok(DecisionTree { nodes, max_depth })
}

fn write_gbdt(w: &mut Writer, m: &GbdtModel) {
    let c = &m.config;
    w.usize(c.n_estimators);
    w.f64(c.learning_rate);
    w.usize(c.max_depth);
    w.usize(c.min_leaf);
    w.usize(m.n_features);
    m.init_scores.iter().for_each(|&v| w.f64(v));
    w.f64s(&m.train_loss);
    w.usize(m.rounds.len());
    for round in &m.rounds {
        w.f64(round.scale);
        round.trees.iter().for_each(|t| write_tree(w, t));
    }
}

fn read_gbdt(r: &mut Reader) -> Result<GbdtModel, BundleError> {
    let config = GbdtConfig {
        n_estimators: r.usize()?,
        learning_rate: r.f64()?,
        max_depth: r.usize()?,
        min_leaf: r.usize()?,
    };
    let n_features = r.usize()?;
    let init_scores = [r.f64()?, r.f64()?, r.f64()?];
    let train_loss = r.f64s()?;
    let n_rounds = r.len(8)?;
    let mut rounds = Vec::with_capacity(n_rounds);
    for _ in 0..n_rounds {
        let scale = r.f64()?;
        let trees = (0..N_CLASSES).map(|_| read_tree(r, n_features)).collect::<Result<_, _>>()?;
        rounds.push(GbdtRound { trees, scale });
    }
    Ok(GbdtModel {
        init_scores,
        rounds,
        config,
        n_features,
        train_loss,
    })
}

fn write_model(w: &mut Writer, m: &TrainedModel) {
    w.u8(m.kind().code());
    match m {
        TrainedModel::LogReg(m) => {
            w.usize(m.n_features);
            w.f64(m.c);
            w.usize(m.gd.max_iter);
            w.f64(m.gd.tolerance);
            w.usize(m.iterations);
            w.f64(m.final_loss);
            w.f64s(&m.weights);
            m.bias.iter().for_each(|&b| w.f64(b));
        }
        TrainedModel::BaggedGbdt(m) => {
            w.usize(m.bagging.members);
            w.bool(m.bagging.bootstrap);
            w.usize(m.n_features);
            w.usize(m.members.len());
            for (s, member) in m.seeds.iter().zip(&m.members) {
                w.u64(*s);
                write_gbdt(w, member);
            }
        }
        TrainedModel::Knn(m) => {
            w.usize(m.k);
            w.usize(m.x.n_rows());
            w.usize(m.x.n_cols());
            m.x.as_slice().iter().for_each(|&v| w.f64(v));
            m.y.iter().for_each(|l| w.u8(l.index() as u8));
        }
        TrainedModel::AdaBoost(m) => {
            w.usize(m.n_estimators);
            w.usize(m.max_depth);
            w.usize(m.n_features);
            w.usize(m.stages.len());
            for s in &m.stages {
                w.f64(s.alpha);
                w.f64(s.error);
                write_tree(w, &s.tree);
            }
        }
        TrainedModel::Cse(m) => {
            write_params(w, &m.params);
            w.usize(m.n_features);
            w.usize(m.meta.n_features);
            w.f64(m.meta.c);
            w.f64s(&m.meta.weights);
            m.meta.bias.iter().for_each(|&b| w.f64(b));
            w.usize(m.bases.len());
            m.bases.iter().for_each(|b| write_model(w, b));
        }
    }
}

fn read_model(r: &mut Reader) -> Result<TrainedModel, BundleError> {
    let tag = r.u8()?;
    let kind = ModelKind::from_code(tag).ok_or(BundleError::BadTag { what: "model", tag })?;
    let model = match kind {
        ModelKind::LogReg => {
            let n_features = r.usize()?;
            let c = r.f64()?;
            let gd = GdConfig {
                max_iter: r.usize()?,
                tolerance: r.f64()?,
            };
            let iterations = r.usize()?;
            let final_loss = r.f64()?;
            let weights = r.f64s()?;
            let bias = [r.f64()?, r.f64()?, r.f64()?];
            if weights.len() != N_CLASSES * n_features {
                return Err(BundleError::Invalid("logistic regression weight shape".into()));
            }
            TrainedModel::LogReg(LogRegModel {
                weights,
                bias,
                c,
                n_features,
                gd,
                iterations,
                final_loss,
            })
        }
        ModelKind::BaggedGbdt => {
            let bagging = BaggingConfig {
                members: r.usize()?,
                bootstrap: r.bool()?,
            };
            let n_features = r.usize()?;
            let n = r.len(8)?;
            let mut seeds = Vec::with_capacity(n);
            let mut members = Vec::with_capacity(n);
            for _ in 0..n {
                seeds.push(r.u64()?);
                let m = read_gbdt(r)?;
                if m.n_features != n_features {
                    return Err(BundleError::Invalid("bagged member width".into()));
                }
                members.push(m);
            }
            if members.is_empty() {
                return Err(BundleError::Invalid("bagged model without members".into()));
            }
            TrainedModel::BaggedGbdt(BaggedModel {
                members,
                seeds,
                bagging,
                n_features,
            })
        }
        ModelKind::Knn => {
            let k = r.usize()?;
            let rows = r.usize()?;
            let cols = r.usize()?;
            let cells = rows.checked_mul(cols).ok_or(BundleError::Truncated("knn"))?;
            if cells.saturating_mul(8) > r.buf.len() - r.pos {
                return Err(BundleError::Truncated("knn"));
            }
            let data = (0..cells).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            let y = (0..rows).map(|_| label_from(r.u8()?)).collect::<Result<Vec<_>, _>>()?;
            if k == 0 || k > rows {
                return Err(BundleError::Invalid(format!("knn k = {k} with {rows} rows")));
            }
            TrainedModel::Knn(KnnModel {
                k,
                x: Matrix::from_vec(rows, cols, data).expect("shape checked"),
                y,
            })
        }
        ModelKind::AdaBoost => {
            let n_estimators = r.usize()?;
            let max_depth = r.usize()?;
            let n_features = r.usize()?;
            let n = r.len(16)?;
            let mut stages = Vec::with_capacity(n);
            for _ in 0..n {
                let alpha = r.f64()?;
                let error = r.f64()?;
                stages.push(AdaStage {
                    tree: read_tree(r, n_features)?,
                    alpha,
                    error,
                });
            }
            TrainedModel::AdaBoost(AdaBoostModel {
                stages,
                n_estimators,
                max_depth,
                n_features,
            })
        }
        ModelKind::Cse => {
            let params = read_params(r)?;
            let n_features = r.usize()?;
            let meta_features = r.usize()?;
            let c = r.f64()?;
            let weights = r.f64s()?;
            let bias = [r.f64()?, r.f64()?, r.f64()?];
            if weights.len() != N_CLASSES * meta_features {
                return Err(BundleError::Invalid("meta-model weight shape".into()));
            }
            let n = r.len(1)?;
            let bases = (0..n).map(|_| read_model(r)).collect::<Result<Vec<_>, _>>()?;
            let expected: Vec<ModelKind> = crate::stacking::BASE_MODELS.to_vec();
            if bases.iter().map(TrainedModel::kind).collect::<Vec<_>>() != expected {
                return Err(BundleError::Invalid("stacking base models out of order".into()));
            }
            if bases.iter().any(|b| b.n_features() != n_features) || meta_features != crate::stacking::META_DIM {
                return Err(BundleError::Invalid("stacking widths".into()));
            }
            TrainedModel::Cse(StackingEnsemble {
                bases,
                meta: OvrLogReg {
                    weights,
                    bias,
                    c,
                    n_features: meta_features,
                },
                params,
                n_features,
            })
        }
    };
    Ok(model)
}

// ---------------------------------------------------------------------------
// Container

fn manifest(b: &ModelBundle) -> String {
    let p = &b.provenance;
    let mut s = String::new();
    let _ = writeln!(s, "format_version={VERSION}");
    let _ = writeln!(s, "float_encoding=f64le");
    let _ = writeln!(s, "model={}", b.model.kind());
    let _ = writeln!(s, "feature_set={}", b.pipeline.feature_set);
    let _ = writeln!(s, "n_features={}", b.pipeline.dim());
    let _ = writeln!(s, "vocabulary={}", b.pipeline.tfidf.dim());
    let _ = writeln!(s, "embedding_dim={}", b.pipeline.emb_dim);
    let _ = writeln!(s, "config_hash={:016x}", p.config_hash());
    let _ = writeln!(s, "corpus_fingerprint={:016x}", p.corpus_fingerprint);
    let _ = writeln!(s, "split_seed={}", p.split_seed);
    let _ = writeln!(s, "fold_seed={}", p.fold_seed);
    let _ = writeln!(s, "model_seed={}", p.model_seed);
    let _ = writeln!(s, "created_unix={}", p.created_unix);
    if let TrainedModel::Cse(m) = &b.model {
        for (k, v) in m.params.entries() {
            let _ = writeln!(s, "param.{k}={v}");
        }
    }
    s
}

/// Parses `key=value` manifest lines.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, String)>, BundleError> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| BundleError::Manifest(format!("line without '=': {l:?}")))
        })
        .collect()
}

fn manifest_value<'a>(m: &'a [(String, String)], key: &str) -> Result<&'a str, BundleError> {
    m.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| BundleError::Manifest(format!("missing {key}")))
}

fn manifest_u64(m: &[(String, String)], key: &str, hex: bool) -> Result<u64, BundleError> {
    let v = manifest_value(m, key)?;
    let parsed = if hex { u64::from_str_radix(v, 16) } else { v.parse() };
    parsed.map_err(|_| BundleError::Manifest(format!("{key} is not a number: {v:?}")))
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u16(VERSION);
        let m = manifest(self);
        w.u32(m.len() as u32);
        w.buf.extend_from_slice(m.as_bytes());

        let mut pipeline = Writer::default();
        write_pipeline(&mut pipeline, &self.pipeline);
        let mut model = Writer::default();
        write_model(&mut model, &self.model);
        for (name, bytes) in [
            ("config", self.provenance.config_text.as_bytes()),
            ("pipeline", &pipeline.buf[..]),
            ("model", &model.buf[..]),
        ] {
            w.u16(name.len() as u16);
            w.buf.extend_from_slice(name.as_bytes());
            w.u64(bytes.len() as u64);
            w.buf.extend_from_slice(bytes);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let mut r = Reader::new(bytes, "header");
        if r.take(4).map_err(|_| BundleError::BadMagic)? != MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let mlen = r.u32()? as usize;
        let mtext = std::str::from_utf8(r.take(mlen)?).map_err(|_| BundleError::Manifest("not UTF-8".into()))?;
        let manifest = parse_manifest(mtext)?;

        let mut sections: Vec<(String, &[u8])> = Vec::new();
        while r.pos < bytes.len() {
            r.what = "section header";
            let n = r.u16()? as usize;
            let name = String::from_utf8_lossy(r.take(n)?).into_owned();
            let len = r.len(1)?;
            sections.push((name, r.take(len)?));
        }
        let section = |name: &'static str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| *b)
                .ok_or(BundleError::MissingSection(name))
        };

        let config_text = std::str::from_utf8(section("config")?)
            .map_err(|_| BundleError::Invalid("config section is not UTF-8".into()))?
            .to_string();
        let recorded = manifest_u64(&manifest, "config_hash", true)?;
        let actual = fnv1a64(config_text.as_bytes());
        if recorded != actual {
            return Err(BundleError::ConfigHash { manifest: recorded, actual });
        }

        let mut pr = Reader::new(section("pipeline")?, "pipeline");
        let pipeline = read_pipeline(&mut pr)?;
        pr.finish()?;
        let mut mr = Reader::new(section("model")?, "model");
        let model = read_model(&mut mr)?;
        mr.finish()?;
        if model.n_features() != pipeline.dim() {
            return Err(BundleError::Invalid(format!(
                "model expects {} features, pipeline produces {}",
                model.n_features(),
                pipeline.dim()
            )));
        }

        Ok(Self {
            pipeline,
            model,
            provenance: TrainingProvenance {
                config_text,
                corpus_fingerprint: manifest_u64(&manifest, "corpus_fingerprint", true)?,
                split_seed: manifest_u64(&manifest, "split_seed", false)?,
                fold_seed: manifest_u64(&manifest, "fold_seed", false)?,
                model_seed: manifest_u64(&manifest, "model_seed", false)?,
                created_unix: manifest_u64(&manifest, "created_unix", false)?,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Manifest text of an encoded bundle without decoding the payload.
    pub fn read_manifest(bytes: &[u8]) -> Result<Vec<(String, String)>, BundleError> {
        let mut r = Reader::new(bytes, "header");
        if r.take(4).map_err(|_| BundleError::BadMagic)? != MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        parse_manifest(std::str::from_utf8(r.take(n)?).map_err(|_| BundleError::Manifest("not UTF-8".into()))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::embedding::{DenseVector, EmbeddingTable, Pooling};
    use crate::learners::{predict_rows, train_model};
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    const TEXTS: [(&str, Label); 9] = [
        ("el servicio fue excelente y rapido", Label::Positive),
        ("muy buena atencion del personal", Label::Positive),
        ("excelente trato muy amable", Label::Positive),
        ("la espera fue normal", Label::Neutral),
        ("la cita fue el martes", Label::Neutral),
        ("atencion normal sin novedades", Label::Neutral),
        ("pesimo servicio y mala atencion", Label::Negative),
        ("la espera fue terrible y lenta", Label::Negative),
        ("muy mala experiencia pesimo trato", Label::Negative),
    ];

    fn fixture(set: FeatureSet) -> (Vec<Document>, EmbeddingTable, FeaturePipeline, Matrix, Vec<Label>) {
        let docs: Vec<Document> = TEXTS.iter().map(|(t, l)| Document::new(*t, Some(*l))).collect();
        let mut table = EmbeddingTable::new(4, Pooling::MeanPool, "test");
        let mut rng = SplitMix64::new(3);
        for d in &docs {
            let v: Vec<f32> = (0..4).map(|_| rng.normal() as f32).collect();
            table.insert(d.id, DenseVector(v)).unwrap();
        }
        let pipeline = FeaturePipeline::fit(&docs, set, TfidfConfig::default(), Some(&table), true).unwrap();
        let x = pipeline.matrix(&docs, Some(&table)).unwrap();
        let y = docs.iter().map(|d| d.label.unwrap()).collect();
        (docs, table, pipeline, x, y)
    }

    fn small_params() -> Hyperparams {
        let mut h = Hyperparams::default();
        h.gbdt.n_estimators = 5;
        h.gbdt.min_leaf = 1;
        h.bagging.members = 2;
        h.ada_n_estimators = 5;
        h.cse_folds = 3;
        h.knn_k = 3;
        h
    }

    fn provenance() -> TrainingProvenance {
        TrainingProvenance {
            config_text: "[model]\nkind = \"cse\"\n".into(),
            corpus_fingerprint: 0xdead_beef,
            split_seed: 1,
            fold_seed: 2,
            model_seed: 3,
            created_unix: 0,
        }
    }

    #[test]
    fn every_model_kind_round_trips() {
        for set in [FeatureSet::Tfidf, FeatureSet::TfidfEmb] {
            let (_, _, pipeline, x, y) = fixture(set);
            for kind in ModelKind::ALL {
                let model = train_model(kind, &small_params(), &x, &y, 0).unwrap();
                let b = ModelBundle {
                    pipeline: pipeline.clone(),
                    model,
                    provenance: provenance(),
                };
                let bytes = b.to_bytes();
                let back = ModelBundle::from_bytes(&bytes).unwrap();
                assert_eq!(back, b, "{kind} {set}");
                assert_eq!(back.to_bytes(), bytes);
                let p1 = predict_rows(&b.model, &x).unwrap();
                let p2 = predict_rows(&back.model, &x).unwrap();
                assert_eq!(p1, p2);
            }
        }
    }

    #[test]
    fn manifest_is_readable() {
        let (_, _, pipeline, x, y) = fixture(FeatureSet::Tfidf);
        let model = train_model(ModelKind::Cse, &small_params(), &x, &y, 0).unwrap();
        let b = ModelBundle {
            pipeline,
            model,
            provenance: provenance(),
        };
        let m = ModelBundle::read_manifest(&b.to_bytes()).unwrap();
        let get = |k: &str| m.iter().find(|(key, _)| key == k).unwrap().1.clone();
        assert_eq!(get("model"), "cse");
        assert_eq!(get("feature_set"), "tfidf");
        assert_eq!(get("param.knn__n_neighbors"), "3");
        assert_eq!(get("fold_seed"), "2");
    }

    #[test]
    fn corrupted_bundles_are_rejected() {
        let (_, _, pipeline, x, y) = fixture(FeatureSet::Tfidf);
        let model = train_model(ModelKind::LogReg, &small_params(), &x, &y, 0).unwrap();
        let b = ModelBundle {
            pipeline,
            model,
            provenance: provenance(),
        };
        let bytes = b.to_bytes();
        assert!(matches!(ModelBundle::from_bytes(b"NOPE"), Err(BundleError::BadMagic)));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(ModelBundle::from_bytes(&v), Err(BundleError::UnsupportedVersion(9))));
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(ModelBundle::from_bytes(&bytes[..cut]).is_err());
        }
        // Edit the config text without updating the manifest hash.
        let pos = bytes.windows(5).position(|w| w == b"kind ").unwrap();
        let mut v = bytes.clone();
        v[pos] = b'K';
        assert!(matches!(ModelBundle::from_bytes(&v), Err(BundleError::ConfigHash { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn loaded_bundle_predicts_identically(words in prop::collection::vec("(servicio|excelente|mala|espera|normal|zzz|atencion)", 0..8), emb in prop::collection::vec(-3.0f32..3.0, 4)) {
            let (_, _, pipeline, x, y) = fixture(FeatureSet::TfidfEmb);
            let model = train_model(ModelKind::LogReg, &small_params(), &x, &y, 0).unwrap();
            let b = ModelBundle { pipeline, model, provenance: provenance() };
            let back = ModelBundle::from_bytes(&b.to_bytes()).unwrap();
            let text = words.join(" ");
            let e = DenseVector(emb);
            let v1 = b.pipeline.transform(&text, Some(&e)).unwrap().to_dense();
            let v2 = back.pipeline.transform(&text, Some(&e)).unwrap().to_dense();
            prop_assert_eq!(&v1, &v2);
            prop_assert_eq!(b.model.predict(&v1).unwrap(), back.model.predict(&v2).unwrap());
        }
    }
}
