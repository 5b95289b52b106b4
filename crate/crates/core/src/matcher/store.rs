//! Contiguous embedding gallery and its binary file format.
//!
//! File layout (little-endian): magic `FPEM`, `u32` version, `u32` dim,
//! `u64` count, then per record `u64` subject id, `u32` impression id and
//! `dim` `f32` values.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"FPEM";
pub const STORE_VERSION: u32 = 1;
/// Allowed deviation of an enrolled vector's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordId {
    pub subject_id: u64,
    pub impression_id: u32,
}

impl RecordId {
    pub fn new(subject_id: u64, impression_id: u32) -> Self {
        Self {
            subject_id,
            impression_id,
        }
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scale a vector to unit L2 norm.
pub fn normalized(v: &[f32]) -> Result<Vec<f32>> {
    let n = l2_norm(v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numerical(format!("cannot normalize a vector of norm {n}")));
    }
    Ok(v.iter().map(|&x| (f64::from(x) / n) as f32).collect())
}

/// Immutable-after-build gallery of unit-norm embeddings stored as one
/// row-major block.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<RecordId>,
    values: Vec<f32>,
    seen: HashSet<RecordId>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            seen: HashSet::new(),
        })
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Result<Self> {
        let mut s = Self::new(dim)?;
        s.ids.reserve(capacity);
        s.values.reserve(capacity * dim);
        s.seen.reserve(capacity);
        Ok(s)
    }

    /// Enroll one vector. It must have the store's dimension, unit norm and
    /// a fresh `(subject, impression)` pair.
    pub fn insert(&mut self, id: RecordId, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector of dimension {} cannot join a dimension-{} store",
                vector.len(),
                self.dim
            )));
        }
        let norm = l2_norm(vector);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "record (subject {}, impression {}) has norm {norm}, expected 1",
                id.subject_id, id.impression_id
            )));
        }
        if !self.seen.insert(id) {
            return Err(Error::Validation(format!(
                "duplicate record (subject {}, impression {})",
                id.subject_id, id.impression_id
            )));
        }
        self.ids.push(id);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn ids(&self) -> &[RecordId] {
        &self.ids
    }

    /// Row-major `len x dim` value block.
    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn vector(&self, index: usize) -> &[f32] {
        &self.values[index * self.dim..(index + 1) * self.dim]
    }

    pub fn contains(&self, id: RecordId) -> bool {
        self.seen.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (RecordId, &[f32])> {
        self.ids.iter().copied().zip(self.values.chunks_exact(self.dim))
    }

    /// Distinct subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<u64> {
        let mut seen = HashSet::new();
        self.ids
            .iter()
            .filter(|id| seen.insert(id.subject_id))
            .map(|id| id.subject_id)
            .collect()
    }

    /// Records satisfying `keep`, in store order.
    pub fn filtered(&self, mut keep: impl FnMut(RecordId) -> bool) -> Self {
        let mut out = Self::new(self.dim).expect("dim already validated");
        for (id, v) in self.iter() {
            if keep(id) {
                out.ids.push(id);
                out.values.extend_from_slice(v);
                out.seen.insert(id);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.len() * (12 + 4 * self.dim));
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, v) in self.iter() {
            out.extend_from_slice(&id.subject_id.to_le_bytes());
            out.extend_from_slice(&id.impression_id.to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 {
            return Err(Error::Format(format!("store header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != STORE_MAGIC {
            return Err(Error::Format("not an embedding store: bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != STORE_VERSION {
            return Err(Error::Format(format!(
                "unsupported store version {version}, expected {STORE_VERSION}"
            )));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        if dim == 0 {
            return Err(Error::Format("store declares dimension 0".into()));
        }
        let record = 12 + 4 * dim;
        let expected = (count as u128) * record as u128 + 20;
        if bytes.len() as u128 != expected {
            return Err(Error::Format(format!(
                "store declares {count} records of dimension {dim} ({expected} bytes) but holds {} bytes",
                bytes.len()
            )));
        }
        let count = count as usize;
        let mut store = Self::with_capacity(dim, count)?;
        let mut v = vec![0.0f32; dim];
        for rec in bytes[20..].chunks_exact(record) {
            let subject_id = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
            let impression_id = u32::from_le_bytes(rec[8..12].try_into().expect("4 bytes"));
            for (dst, c) in v.iter_mut().zip(rec[12..].chunks_exact(4)) {
                *dst = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            }
            store
                .insert(RecordId::new(subject_id, impression_id), &v)
                .map_err(|e| Error::Format(format!("invalid record: {e}")))?;
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
