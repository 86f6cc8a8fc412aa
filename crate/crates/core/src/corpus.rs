//! Labeled corpus ingestion, normalization, splits and fold plans.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::label::{Label, N_CLASSES};
use crate::rng::{fnv1a64, SplitMix64};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("column {column:?} not found in header of {path}")]
    MissingColumn { column: String, path: PathBuf },
    #[error("row {row}: unknown label {label:?} (expected positive/neutral/negative or positivo/neutral/negativo)")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: document has no label")]
    Unlabeled { row: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("stratification needs at least 2 documents of class {label}, found {count}")]
    TooFewPerClass { label: Label, count: usize },
    #[error("cannot build {k} folds from {n} items")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("{indices} indices but {labels} labels")]
    LengthMismatch { indices: usize, labels: usize },
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub text_col: String,
    pub label_col: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            text_col: "text".into(),
            label_col: "label".into(),
        }
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content hash used as the join key between corpus rows and embeddings.
pub fn document_id(normalized: &str) -> u64 {
    fnv1a64(normalized.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    /// FNV-1a of the normalized text.
    pub id: u64,
    pub text: String,
    pub label: Option<Label>,
    /// 1-based data row in the source file (header excluded).
    pub row: usize,
}

impl Document {
    pub fn new(text: impl Into<String>, label: Option<Label>) -> Self {
        let text = text.into();
        Self {
            id: document_id(&normalize_text(&text)),
            text,
            label,
            row: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub source: Option<PathBuf>,
    pub preprocessed: bool,
    pub dropped_empty: usize,
    pub dropped_unlabeled: usize,
    pub dropped_duplicate: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    pub documents: Vec<Document>,
    pub provenance: Provenance,
}

impl LabeledCorpus {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Label)>) -> Self {
        let documents = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (text, label))| {
                let mut doc = Document::new(text, Some(label));
                doc.row = i + 1;
                doc
            })
            .collect();
        Self {
            documents,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Result<Vec<Label>, CorpusError> {
        self.documents
            .iter()
            .map(|d| d.label.ok_or(CorpusError::Unlabeled { row: d.row }))
            .collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledCorpus {
        LabeledCorpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Order-sensitive hash over (id, label) pairs.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.documents.len() * 9);
        for d in &self.documents {
            bytes.extend_from_slice(&d.id.to_le_bytes());
            bytes.push(d.label.map_or(0xff, |l| l.index() as u8));
        }
        fnv1a64(&bytes)
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for l in self.documents.iter().filter_map(|d| d.label) {
            counts[l.index()] += 1;
        }
        counts
    }
}

/// Reads a UTF-8 CSV with a header row. Rows are returned in file order and
/// unnormalized; an empty label cell yields an unlabeled document.
pub fn load_corpus(path: &Path, schema: &CsvSchema) -> Result<LabeledCorpus, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut corpus = read_corpus(file, path, schema, true)?;
    corpus.provenance.source = Some(path.to_path_buf());
    Ok(corpus)
}

/// Like [`load_corpus`] but the label column is optional (prediction input).
pub fn load_unlabeled(path: &Path, schema: &CsvSchema) -> Result<LabeledCorpus, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(LabeledCorpus::default());
    }
    let mut corpus = read_corpus(bytes.as_slice(), path, schema, false)?;
    corpus.provenance.source = Some(path.to_path_buf());
    Ok(corpus)
}

fn read_corpus(
    reader: impl std::io::Read,
    path: &Path,
    schema: &CsvSchema,
    label_required: bool,
) -> Result<LabeledCorpus, CorpusError> {
    let csv_err = |source| CorpusError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_idx = find(&schema.text_col).ok_or_else(|| CorpusError::MissingColumn {
        column: schema.text_col.clone(),
        path: path.to_path_buf(),
    })?;
    let label_idx = match find(&schema.label_col) {
        Some(i) => Some(i),
        None if label_required => {
            return Err(CorpusError::MissingColumn {
                column: schema.label_col.clone(),
                path: path.to_path_buf(),
            })
        }
        None => None,
    };

    let mut documents = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        let text = record.get(text_idx).unwrap_or("");
        let label = match label_idx.and_then(|li| record.get(li)).map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(Label::parse(raw).ok_or_else(|| CorpusError::UnknownLabel {
                row,
                label: raw.to_string(),
            })?),
        };
        let mut doc = Document::new(text, label);
        doc.row = row;
        documents.push(doc);
    }
    Ok(LabeledCorpus {
        documents,
        provenance: Provenance::default(),
    })
}

/// Normalizes text, drops empty or unlabeled rows and removes duplicates
/// (first occurrence wins). Idempotent.
pub fn preprocess(corpus: &LabeledCorpus) -> LabeledCorpus {
    clean(corpus, false)
}

/// [`preprocess`] for inference input: rows without a label are kept.
pub fn preprocess_unlabeled(corpus: &LabeledCorpus) -> LabeledCorpus {
    clean(corpus, true)
}

fn clean(corpus: &LabeledCorpus, keep_unlabeled: bool) -> LabeledCorpus {
    let mut prov = corpus.provenance.clone();
    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(corpus.documents.len());
    for doc in &corpus.documents {
        let text = normalize_text(&doc.text);
        if text.is_empty() {
            prov.dropped_empty += 1;
            continue;
        }
        if doc.label.is_none() && !keep_unlabeled {
            prov.dropped_unlabeled += 1;
            continue;
        }
        let id = document_id(&text);
        if !seen.insert(id) {
            prov.dropped_duplicate += 1;
            continue;
        }
        documents.push(Document {
            id,
            text,
            label: doc.label,
            row: doc.row,
        });
    }
    prov.preprocessed = true;
    LabeledCorpus {
        documents,
        provenance: prov,
    }
}

/// Train/test partition of corpus positions. Both lists are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

/// Deterministic shuffled split. Stratified mode allocates the
/// `round(test_fraction * N)` test slots across classes by largest remainder
/// (ties to the lower class index), never emptying a class's training side.
pub fn split(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitPlan, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadFraction(test_fraction));
    }
    let n = labels.len();
    if n < 2 {
        return Err(CorpusError::Empty);
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = SplitMix64::stream(seed, "split", 0);

    let mut test = Vec::with_capacity(n_test);
    let mut train = Vec::with_capacity(n - n_test);
    if stratified {
        let groups = class_groups(labels);
        for (k, g) in groups.iter().enumerate() {
            if !g.is_empty() && g.len() < 2 {
                return Err(CorpusError::TooFewPerClass {
                    label: Label::ALL[k],
                    count: g.len(),
                });
            }
        }
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let quota = largest_remainder(&sizes, test_fraction, n_test);
        for (k, mut group) in groups.into_iter().enumerate() {
            rng.shuffle(&mut group);
            let (t, r) = group.split_at(quota[k]);
            test.extend_from_slice(t);
            train.extend_from_slice(r);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut all);
        test.extend_from_slice(&all[..n_test]);
        train.extend_from_slice(&all[n_test..]);
    }
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        test_fraction,
        seed,
        stratified,
    })
}

fn class_groups(labels: &[Label]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); N_CLASSES];
    for (i, l) in labels.iter().enumerate() {
        groups[l.index()].push(i);
    }
    groups
}

/// Distributes `total` slots over groups proportionally to `fraction * size`,
/// capping each group at `size - 1`.
fn largest_remainder(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let cap = |k: usize| sizes[k].saturating_sub(1);
    let mut quota: Vec<usize> = exact
        .iter()
        .enumerate()
        .map(|(k, e)| (e.floor() as usize).min(cap(k)))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = quota.iter().sum();
    // Extra passes cover the rare case where caps push slots to other classes.
    while assigned < total {
        let before = assigned;
        for &k in &order {
            if assigned == total {
                break;
            }
            if quota[k] < cap(k) {
                quota[k] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    quota
}

/// Assignment of positions `0..n` to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id of each position of the index list the plan was built from.
    pub assignments: Vec<usize>,
    /// The index list itself (e.g. corpus positions of the training split).
    pub indices: Vec<usize>,
    pub stratified: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Positions held out in fold `f`.
    pub fn test_positions(&self, f: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignments[i] == f).collect()
    }

    /// Positions used for training when fold `f` is held out.
    pub fn train_positions(&self, f: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignments[i] != f).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles positions and deals them cyclically into `k` folds. In stratified
/// mode the shuffled positions are grouped by class before dealing, so every
/// class spreads over folds with counts differing by at most one, as do the
/// overall fold sizes.
pub fn make_folds(
    indices: &[usize],
    labels: &[Label],
    k: usize,
    stratified: bool,
    seed: u64,
) -> Result<FoldPlan, CorpusError> {
    if indices.len() != labels.len() {
        return Err(CorpusError::LengthMismatch {
            indices: indices.len(),
            labels: labels.len(),
        });
    }
    if k < 2 {
        return Err(CorpusError::KTooSmall(k));
    }
    let n = indices.len();
    if k > n {
        return Err(CorpusError::KTooLarge { k, n });
    }
    let mut rng = SplitMix64::stream(seed, "folds", 0);
    let order: Vec<usize> = if stratified {
        let mut order = Vec::with_capacity(n);
        for mut group in class_groups(labels) {
            rng.shuffle(&mut group);
            order.extend(group);
        }
        order
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut all);
        all
    };
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        indices: indices.to_vec(),
        stratified,
        seed,
    })
}
