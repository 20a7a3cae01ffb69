use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::trainer::{DataCursor, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SESSACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in f64 elements.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: TrainConfig,
    step: usize,
    cursor: DataCursor,
    tensors: Vec<TensorEntry>,
}

/// Trained model plus everything needed to reproduce it.
///
/// On disk: magic, `u64` little-endian header length, JSON header (config,
/// step, data cursor, tensor index), then every tensor as little-endian `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: usize,
    pub cursor: DataCursor,
    pub model: Model,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut blob = Vec::new();
        let mut offset = 0;
        for (name, shape, data) in self.model.tensors() {
            tensors.push(TensorEntry { name, shape, offset, len: data.len() });
            offset += data.len();
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            step: self.step,
            cursor: self.cursor,
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + blob.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[16..];
        if header_len > body.len() as u64 {
            return Err(Error::Checkpoint(format!("header claims {header_len} bytes but only {} remain", body.len())));
        }
        let (json, blob) = body.split_at(header_len as usize);
        let header: Header =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header parse error: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let expected: usize = header.tensors.iter().map(|t| t.len).sum();
        if blob.len() != 8 * expected {
            return Err(Error::Checkpoint(format!(
                "integrity error: blob holds {} bytes but the index describes {}",
                blob.len(),
                8 * expected
            )));
        }
        let mut model = Model::zeros(&header.config.model_config());
        let layout: Vec<(String, Vec<usize>, usize)> =
            model.tensors().into_iter().map(|(n, s, d)| (n, s, d.len())).collect();
        if layout.len() != header.tensors.len() {
            return Err(Error::Checkpoint("tensor index does not match the configured model".into()));
        }
        for ((name, shape, len), entry) in layout.iter().zip(&header.tensors) {
            if *name != entry.name || *shape != entry.shape || *len != entry.len {
                return Err(Error::Checkpoint(format!("tensor {} does not match the configured model", entry.name)));
            }
            if entry.offset + entry.len > expected {
                return Err(Error::Checkpoint(format!("tensor {} lies outside the blob", entry.name)));
            }
        }
        for (dst, entry) in model.tensors_mut().into_iter().zip(&header.tensors) {
            let src = &blob[8 * entry.offset..8 * (entry.offset + entry.len)];
            for (d, c) in dst.iter_mut().zip(src.chunks_exact(8)) {
                *d = f64::from_le_bytes(c.try_into().expect("8 bytes"));
            }
        }
        Ok(Self { config: header.config, step: header.step, cursor: header.cursor, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
