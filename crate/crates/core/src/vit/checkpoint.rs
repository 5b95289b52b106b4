//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `FPVT`, `u32` version, `u32` header length,
//! UTF-8 JSON header, then per tensor: `u16` name length, name bytes,
//! `u8` rank, `u32` per dimension, and `f32` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tokenizer::NORMALIZATION_CONTRACT;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FPVT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub normalization: String,
    pub tensor_count: usize,
    /// Free-form run metadata, e.g. tokenization mode and map sigma.
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, meta: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        config: params.config.clone(),
        normalization: NORMALIZATION_CONTRACT.to_string(),
        tensor_count: params.tensors().len(),
        meta: meta.clone(),
    };
    let header_text =
        serde_json::to_string(&header).map_err(|e| Error::Format(format!("cannot encode header: {e}")))?;
    let mut out = Vec::with_capacity(16 + header_text.len() + params.param_count() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_text.len() as u32).to_le_bytes());
    out.extend_from_slice(header_text.as_bytes());
    for (name, tensor) in params.named_tensors() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape.len() as u8);
        for &d in &tensor.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &tensor.data {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(ModelParams<T>, CheckpointHeader)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint: bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = r.u32("header length")? as usize;
    let header_bytes = r.take(header_len, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Format(format!("invalid checkpoint header: {e}")))?;
    header.config.validate()?;

    let mut params = ModelParams::<T>::zeros_like(&header.config);
    let names = ModelParams::<T>::tensor_names(&header.config);
    if header.tensor_count != names.len() {
        return Err(Error::Format(format!(
            "header lists {} tensors, configuration implies {}",
            header.tensor_count,
            names.len()
        )));
    }
    for (expected, tensor) in names.iter().zip(params.tensors_mut()) {
        let name_len = u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::Format(format!("expected tensor {expected:?}, found {name:?}")));
        }
        let rank = r.take(1, "tensor rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dimension")? as usize);
        }
        if shape != tensor.shape {
            return Err(Error::Format(format!(
                "tensor {name} has shape {shape:?}, expected {:?}",
                tensor.shape
            )));
        }
        let raw = r.take(tensor.len() * 4, name)?;
        for (dst, chunk) in tensor.data.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::of(f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes"))));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok((params, header))
}

pub fn save_checkpoint<T: Scalar>(
    params: &ModelParams<T>,
    meta: &BTreeMap<String, String>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(params, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(ModelParams<T>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_identical_for_f32() {
        let cfg = ModelConfig::desk(2, 7).with_seed(3);
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("mode".to_string(), "concat".to_string());
        let bytes = write_checkpoint(&p, &meta).unwrap();
        let (q, header) = read_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(header.meta, meta);
        assert_eq!(header.config, cfg);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let cfg = ModelConfig::desk(0, 3);
        let p = ModelParams::<f32>::init(&cfg).unwrap();
        let bytes = write_checkpoint(&p, &BTreeMap::new()).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint::<f32>(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(read_checkpoint::<f32>(&bad), Err(Error::Format(m)) if m.contains("version")));

        assert!(matches!(
            read_checkpoint::<f32>(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }
}
