use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Split, Target, TaskSample};
use crate::error::{Error, Result};

pub const DATASET_VERSION: u32 = 1;

/// JSON sidecar stored next to a token file as `<path>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub task: String,
    pub split: Split,
    pub config: serde_json::Value,
    pub n_samples: usize,
    pub targets: Vec<Vec<Target>>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes each sample as a little-endian `u32` length followed by its `u32`
/// token ids, plus the sidecar.
pub fn write_dataset(
    path: &Path,
    task: &str,
    split: Split,
    config: serde_json::Value,
    samples: &[TaskSample],
) -> Result<DatasetMeta> {
    let mut bytes = Vec::new();
    for s in samples {
        let len = u32::try_from(s.tokens.len()).map_err(|_| Error::InvalidInput("sequence too long".into()))?;
        bytes.extend_from_slice(&len.to_le_bytes());
        for t in &s.tokens {
            bytes.extend_from_slice(&t.to_le_bytes());
        }
    }
    let meta = DatasetMeta {
        version: DATASET_VERSION,
        task: task.to_string(),
        split,
        config,
        n_samples: samples.len(),
        targets: samples.iter().map(|s| s.targets.clone()).collect(),
    };
    fs::write(path, bytes)?;
    fs::write(sidecar(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

pub fn read_dataset(path: &Path) -> Result<(DatasetMeta, Vec<TaskSample>)> {
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(sidecar(path))?)?;
    if meta.version != DATASET_VERSION {
        return Err(Error::Config(format!("dataset version {} (expected {DATASET_VERSION})", meta.version)));
    }
    let bytes = fs::read(path)?;
    let mut words = bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")));
    if bytes.len() % 4 != 0 {
        return Err(Error::Config("token file is not a whole number of u32 words".into()));
    }
    let mut samples = Vec::with_capacity(meta.n_samples);
    while let Some(len) = words.next() {
        let tokens: Vec<u32> = words.by_ref().take(len as usize).collect();
        if tokens.len() != len as usize {
            return Err(Error::Config("token file truncated".into()));
        }
        samples.push(tokens);
    }
    if samples.len() != meta.n_samples || meta.targets.len() != meta.n_samples {
        return Err(Error::Config(format!(
            "sidecar lists {} samples, token file holds {}",
            meta.n_samples,
            samples.len()
        )));
    }
    let samples = samples
        .into_iter()
        .zip(&meta.targets)
        .map(|(tokens, targets)| TaskSample { tokens, targets: targets.clone() })
        .collect();
    Ok((meta, samples))
}
