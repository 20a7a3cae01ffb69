//! Synthetic long-context tasks and their on-disk format.

mod dataset;
mod mqar;
mod soup;

use serde::{Deserialize, Serialize};

pub use dataset::{read_dataset, write_dataset, DatasetMeta, DATASET_VERSION};
pub use mqar::{gen_diffuse_mqar, mqar_sample, DiffuseMqarConfig, MqarVocab};
pub use soup::{gen_symbolsoup, soup_sample, SymbolSoupConfig};

pub const SEP: u32 = 0;
pub const SEP1: u32 = 1;
pub const SEP2: u32 = 2;
pub const PAD: u32 = 3;
/// First id available to task symbols.
pub const FIRST_SYMBOL: u32 = 4;

/// A supervised position: the logits at `position` must predict `token`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub position: usize,
    pub token: u32,
    /// Distance back to the evidence the prediction depends on.
    pub lag: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub tokens: Vec<u32>,
    pub targets: Vec<Target>,
}

impl TaskSample {
    pub fn max_lag(&self) -> usize {
        self.targets.iter().map(|t| t.lag).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn salt(self) -> u64 {
        match self {
            Split::Train => 0x5452_4149_4e00_0000,
            Split::Test => 0x5445_5354_0000_0000,
        }
    }
}

/// Folds `parts` through the splitmix64 finalizer.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x853C_49E6_748F_EA9B, |acc, &p| {
        let mut z = acc.rotate_left(23) ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

pub(crate) fn sample_seed(seed: u64, split: Split, index: u64) -> u64 {
    mix_seed(&[seed, split.salt(), index])
}
