//! Precomputed document embeddings (EMB1 files) and their fusion with TF-IDF
//! rows.
//!
//! EMB1 layout, all integers little-endian:
//!
//! ```text
//! magic     4 bytes  "EMB1"
//! version   u16      1
//! pooling   u16      0 = mean pooling, 1 = first token
//! dim       u32
//! count     u32
//! id_len    u16      followed by id_len bytes of UTF-8 model id
//! records   count x ( u64 document id, dim x f32 )   ascending by id
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::text::SparseVector;

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u16 = 1;
/// Lower bound applied to per-dimension standard deviations.
pub const STDEV_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown pooling code {0}")]
    BadPooling(u16),
    #[error("file truncated: {0}")]
    Truncated(String),
    #[error("record payload is {payload} bytes, which does not match {count} records of dim {dim}")]
    DimMismatch { dim: usize, count: usize, payload: usize },
    #[error("record {record} (id {id:016x}) contains a non-finite value")]
    NonFinite { record: usize, id: u64 },
    #[error("record {record}: ids must be strictly ascending")]
    Unsorted { record: usize },
    #[error("model id is not valid UTF-8")]
    BadModelId,
    #[error("no embedding for document {id:016x}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    MissingEmbedding { id: u64, context: Option<String> },
    #[error("vector of length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    MeanPool,
    FirstToken,
}

impl Pooling {
    pub fn code(self) -> u16 {
        match self {
            Pooling::MeanPool => 0,
            Pooling::FirstToken => 1,
        }
    }

    pub fn from_code(code: u16) -> Option<Pooling> {
        match code {
            0 => Some(Pooling::MeanPool),
            1 => Some(Pooling::FirstToken),
            _ => None,
        }
    }
}

/// Embedding coordinates, finite f32 values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector(pub Vec<f32>);

impl DenseVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub pooling: Pooling,
    pub model_id: String,
    pub rows: BTreeMap<u64, DenseVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, pooling: Pooling, model_id: impl Into<String>) -> Self {
        Self {
            dim,
            pooling,
            model_id: model_id.into(),
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: u64, v: DenseVector) -> Result<(), EmbeddingError> {
        if v.len() != self.dim {
            return Err(EmbeddingError::LengthMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        self.rows.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Result<&DenseVector, EmbeddingError> {
        self.rows
            .get(&id)
            .ok_or(EmbeddingError::MissingEmbedding { id, context: None })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let bytes = std::fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embeddings(&bytes)
}

pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<(), EmbeddingError> {
    let mut file = std::fs::File::create(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_embeddings(&mut file, table).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_embeddings(w: &mut impl Write, table: &EmbeddingTable) -> std::io::Result<()> {
    w.write_all(&EMB1_MAGIC)?;
    w.write_all(&EMB1_VERSION.to_le_bytes())?;
    w.write_all(&table.pooling.code().to_le_bytes())?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    w.write_all(&(table.rows.len() as u32).to_le_bytes())?;
    let id = table.model_id.as_bytes();
    w.write_all(&(id.len() as u16).to_le_bytes())?;
    w.write_all(id)?;
    for (doc_id, v) in &table.rows {
        w.write_all(&doc_id.to_le_bytes())?;
        for x in &v.0 {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(r: &mut &[u8], what: &str) -> Result<[u8; N], EmbeddingError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| EmbeddingError::Truncated(format!("while reading {what}")))?;
    Ok(buf)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingTable, EmbeddingError> {
    let mut r = bytes;
    let magic: [u8; 4] = take(&mut r, "magic")?;
    if magic != EMB1_MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(take(&mut r, "version")?);
    if version != EMB1_VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let pooling_code = u16::from_le_bytes(take(&mut r, "pooling")?);
    let pooling = Pooling::from_code(pooling_code).ok_or(EmbeddingError::BadPooling(pooling_code))?;
    let dim = u32::from_le_bytes(take(&mut r, "dim")?) as usize;
    let count = u32::from_le_bytes(take(&mut r, "count")?) as usize;
    let id_len = u16::from_le_bytes(take(&mut r, "model id length")?) as usize;
    if r.len() < id_len {
        return Err(EmbeddingError::Truncated("while reading model id".into()));
    }
    let model_id = std::str::from_utf8(&r[..id_len])
        .map_err(|_| EmbeddingError::BadModelId)?
        .to_string();
    r = &r[id_len..];

    let record_len = 8 + 4 * dim;
    let expected = record_len * count;
    if r.len() < expected {
        // A payload that divides evenly into `count` records of another width
        // points at a header/record dimension disagreement, not truncation.
        if count > 0 && r.len().is_multiple_of(count) && r.len() / count >= 8 && (r.len() / count - 8).is_multiple_of(4) {
            return Err(EmbeddingError::DimMismatch {
                dim,
                count,
                payload: r.len(),
            });
        }
        return Err(EmbeddingError::Truncated(format!(
            "expected {expected} payload bytes for {count} records, found {}",
            r.len()
        )));
    }
    if r.len() > expected {
        return Err(EmbeddingError::DimMismatch {
            dim,
            count,
            payload: r.len(),
        });
    }

    let mut table = EmbeddingTable::new(dim, pooling, model_id);
    let mut prev: Option<u64> = None;
    for (record, chunk) in r.chunks_exact(record_len).enumerate() {
        let id = u64::from_le_bytes(chunk[..8].try_into().unwrap());
        if prev.is_some_and(|p| p >= id) {
            return Err(EmbeddingError::Unsorted { record });
        }
        prev = Some(id);
        let values: Vec<f32> = chunk[8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { record, id });
        }
        table.rows.insert(id, DenseVector(values));
    }
    Ok(table)
}

/// Per-dimension z-score parameters, fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseScaler {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl DenseScaler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, v: &DenseVector) -> Result<Vec<f64>, EmbeddingError> {
        if v.len() != self.dim() {
            return Err(EmbeddingError::LengthMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(v.0
            .iter()
            .zip(self.mean.iter().zip(&self.stdev))
            .map(|(&x, (m, s))| (f64::from(x) - m) / s)
            .collect())
    }
}

/// Population mean and standard deviation (floored) over the given ids.
pub fn fit_scaler(table: &EmbeddingTable, train_ids: &[u64]) -> Result<DenseScaler, EmbeddingError> {
    let dim = table.dim;
    let mut mean = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let rows = train_ids
        .iter()
        .map(|&id| table.get(id))
        .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len().max(1) as f64;
    for v in &rows {
        for (m, &x) in mean.iter_mut().zip(&v.0) {
            *m += f64::from(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for v in &rows {
        for ((s, m), &x) in sq.iter_mut().zip(&mean).zip(&v.0) {
            let d = f64::from(x) - m;
            *s += d * d;
        }
    }
    let stdev = sq.iter().map(|s| (s / n).sqrt().max(STDEV_FLOOR)).collect();
    Ok(DenseScaler { mean, stdev })
}

/// Logical concatenation `[tf-idf block | dense block]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub sparse: SparseVector,
    pub dense: Vec<f64>,
}

impl FusedVector {
    pub fn sparse_only(sparse: SparseVector) -> Self {
        Self {
            sparse,
            dense: Vec::new(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.sparse.dim + self.dense.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        if index < self.sparse.dim {
            self.sparse.get(index)
        } else {
            self.dense[index - self.sparse.dim]
        }
    }

    /// Nonzero sparse entries followed by every dense coordinate.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let offset = self.sparse.dim;
        self.sparse
            .entries
            .iter()
            .copied()
            .chain(self.dense.iter().enumerate().map(move |(i, &v)| (offset + i, v)))
    }

    pub fn write_dense(&self, out: &mut [f64]) {
        out.fill(0.0);
        for (i, v) in self.iter_entries() {
            out[i] = v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.total_dim()];
        self.write_dense(&mut out);
        out
    }
}

/// Standardizes `dense` with `scaler` (or passes it through unscaled when no
/// scaler is given) and appends it after the sparse block.
pub fn fuse(
    sparse: SparseVector,
    dense: &DenseVector,
    scaler: Option<&DenseScaler>,
) -> Result<FusedVector, EmbeddingError> {
    let dense = match scaler {
        Some(s) => s.transform(dense)?,
        None => dense.0.iter().map(|&x| f64::from(x)).collect(),
    };
    Ok(FusedVector { sparse, dense })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(u64, &[f32])]) -> EmbeddingTable {
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut t = EmbeddingTable::new(dim, Pooling::MeanPool, "test-model");
        for (id, v) in rows {
            t.insert(*id, DenseVector(v.to_vec())).unwrap();
        }
        t
    }

    fn encode(t: &EmbeddingTable) -> Vec<u8> {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, t).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let t = table(&[(7, &[1.0, 2.0])]);
        let b = encode(&t);
        assert_eq!(&b[..4], b"EMB1");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..8], &[0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..16], &[1, 0, 0, 0]);
        assert_eq!(&b[16..18], &[10, 0]);
        assert_eq!(&b[18..28], b"test-model");
        assert_eq!(&b[28..36], &7u64.to_le_bytes());
        assert_eq!(&b[36..40], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 44);
    }

    #[test]
    fn reads_two_records() {
        let t = table(&[(3, &[0.5, -1.0, 2.0, 0.0]), (9, &[1.0, 1.0, 1.0, 1.0])]);
        let back = decode_embeddings(&encode(&t)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back, t);
    }

    #[test]
    fn bad_magic() {
        let mut b = encode(&table(&[(1, &[1.0])]));
        b[0] = b'X';
        assert!(matches!(decode_embeddings(&b), Err(EmbeddingError::BadMagic(_))));
    }

    #[test]
    fn nan_is_rejected_with_record_index() {
        let t = table(&[(1, &[1.0, 2.0]), (2, &[0.0, 0.0])]);
        let mut b = encode(&t);
        let off = b.len() - 4;
        b[off..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_embeddings(&b),
            Err(EmbeddingError::NonFinite { record: 1, id: 2 })
        ));
    }

    #[test]
    fn truncation_and_dim_errors() {
        let b = encode(&table(&[(1, &[1.0, 2.0, 3.0]), (2, &[1.0, 2.0, 3.0])]));
        assert!(matches!(decode_embeddings(&b[..b.len() - 3]), Err(EmbeddingError::Truncated(_))));
        assert!(matches!(decode_embeddings(&b[..10]), Err(EmbeddingError::Truncated(_))));
        // Header claims dim 4 while records carry 3 values.
        let mut wrong = b.clone();
        wrong[8..12].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(decode_embeddings(&wrong), Err(EmbeddingError::DimMismatch { .. })));
        let mut extra = b;
        extra.extend_from_slice(&[0; 5]);
        assert!(matches!(decode_embeddings(&extra), Err(EmbeddingError::DimMismatch { .. })));
    }

    #[test]
    fn unsorted_ids_rejected() {
        let t = table(&[(1, &[1.0]), (2, &[2.0])]);
        let mut b = encode(&t);
        let first = 18 + t.model_id.len();
        b[first..first + 8].copy_from_slice(&5u64.to_le_bytes());
        assert!(matches!(decode_embeddings(&b), Err(EmbeddingError::Unsorted { record: 1 })));
    }

    #[test]
    fn scaler_hand_values() {
        let t = table(&[(1, &[1.0, 1.0]), (2, &[3.0, 1.0])]);
        let s = fit_scaler(&t, &[1, 2]).unwrap();
        assert_eq!(s.mean, vec![2.0, 1.0]);
        assert_eq!(s.stdev, vec![1.0, STDEV_FLOOR]);
    }

    #[test]
    fn scaler_single_and_zero_rows() {
        let t = table(&[(1, &[4.0, -2.0]), (2, &[0.0, 0.0]), (3, &[0.0, 0.0])]);
        let s = fit_scaler(&t, &[1]).unwrap();
        assert_eq!(s.mean, vec![4.0, -2.0]);
        assert_eq!(s.stdev, vec![STDEV_FLOOR; 2]);
        let z = fit_scaler(&t, &[2, 3]).unwrap();
        assert_eq!(z.mean, vec![0.0, 0.0]);
        assert_eq!(z.stdev, vec![STDEV_FLOOR; 2]);
    }

    #[test]
    fn scaler_missing_id() {
        let t = table(&[(1, &[4.0])]);
        assert!(matches!(
            fit_scaler(&t, &[1, 99]),
            Err(EmbeddingError::MissingEmbedding { id: 99, .. })
        ));
    }

    #[test]
    fn scaler_ignores_test_rows() {
        let mut t = table(&[(1, &[1.0]), (2, &[3.0]), (3, &[100.0])]);
        let before = fit_scaler(&t, &[1, 2]).unwrap();
        t.rows.insert(3, DenseVector(vec![-5000.0]));
        assert_eq!(before, fit_scaler(&t, &[1, 2]).unwrap());
    }

    #[test]
    fn fuse_examples() {
        let scaler = DenseScaler {
            mean: vec![1.0, 2.0, 3.0, 4.0],
            stdev: vec![1.0; 4],
        };
        let f = fuse(SparseVector::zeros(5), &DenseVector(vec![1.0, 2.0, 3.0, 4.0]), Some(&scaler)).unwrap();
        assert_eq!(f.dense, vec![0.0; 4]);
        assert_eq!(f.total_dim(), 9);
        assert_eq!(f.iter_entries().count(), 4);

        let s2 = DenseScaler {
            mean: vec![0.0],
            stdev: vec![2.0],
        };
        let g = fuse(SparseVector::zeros(3), &DenseVector(vec![4.0]), Some(&s2)).unwrap();
        assert_eq!(g.get(3), 2.0);

        assert!(matches!(
            fuse(SparseVector::zeros(3), &DenseVector(vec![4.0, 1.0]), Some(&s2)),
            Err(EmbeddingError::LengthMismatch { expected: 1, got: 2 })
        ));
    }

    proptest! {
        #[test]
        fn emb1_round_trip_is_bit_exact(
            rows in prop::collection::btree_map(any::<u64>(), prop::collection::vec(-1e6f32..1e6, 3), 0..20)
        ) {
            let mut t = EmbeddingTable::new(3, Pooling::FirstToken, "m");
            for (id, v) in rows {
                t.insert(id, DenseVector(v)).unwrap();
            }
            let back = decode_embeddings(&encode(&t)).unwrap();
            prop_assert_eq!(back.len(), t.len());
            for ((ia, a), (ib, b)) in t.rows.iter().zip(&back.rows) {
                prop_assert_eq!(ia, ib);
                let bits_a: Vec<u32> = a.0.iter().map(|x| x.to_bits()).collect();
                let bits_b: Vec<u32> = b.0.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }

        #[test]
        fn fusion_preserves_blocks(
            entries in prop::collection::btree_map(0usize..20, 0.01f64..1.0, 0..10),
            dense in prop::collection::vec(-50f32..50.0, 4),
            mean in prop::collection::vec(-5f64..5.0, 4),
            stdev in prop::collection::vec(0.1f64..10.0, 4),
        ) {
            let sparse = SparseVector { dim: 20, entries: entries.into_iter().collect() };
            let scaler = DenseScaler { mean: mean.clone(), stdev: stdev.clone() };
            let f = fuse(sparse.clone(), &DenseVector(dense.clone()), Some(&scaler)).unwrap();
            for i in 0..20 {
                prop_assert_eq!(f.get(i), sparse.get(i));
            }
            for j in 0..4 {
                let expected = (f64::from(dense[j]) - mean[j]) / stdev[j];
                prop_assert!((f.get(20 + j) - expected).abs() < 1e-6);
            }
        }
    }
}
