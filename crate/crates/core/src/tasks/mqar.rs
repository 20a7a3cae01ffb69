use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_seed, Split, Target, TaskSample, FIRST_SYMBOL, PAD, SEP};
use crate::error::{Error, Result};

/// Diffuse multi-query associative recall.
///
/// Layout: left padding, a memory block of `n_pairs` key/value pairs, a noise
/// block holding `n_distractors` key/value-like patterns whose keys share a
/// prefix with a true key, `<sep>`, then every true key queried once followed
/// by its value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffuseMqarConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub key_len: usize,
    pub n_pairs: usize,
    pub n_distractors: usize,
    /// Minimum number of plain noise tokens in the noise block.
    pub noise_len: usize,
    pub distractor_shared_prefix_len: usize,
    /// Longest memory-to-query span on the train split.
    pub train_max_lag: usize,
    pub test_lag_multiplier: usize,
    pub seed: u64,
}

impl Default for DiffuseMqarConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            seq_len: 256,
            key_len: 2,
            n_pairs: 4,
            n_distractors: 2,
            noise_len: 0,
            distractor_shared_prefix_len: 1,
            train_max_lag: 63,
            test_lag_multiplier: 4,
            seed: 0,
        }
    }
}

/// Partition of the symbol ids into key, value and noise pools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MqarVocab {
    pub keys: Vec<u32>,
    pub values: Vec<u32>,
    pub noise: Vec<u32>,
}

impl DiffuseMqarConfig {
    pub fn vocab(&self) -> MqarVocab {
        let free = self.vocab_size.saturating_sub(FIRST_SYMBOL as usize);
        let n_keys = 2 * free / 5;
        let n_values = 2 * free / 5;
        let ids: Vec<u32> = (FIRST_SYMBOL..self.vocab_size as u32).collect();
        MqarVocab {
            keys: ids[..n_keys].to_vec(),
            values: ids[n_keys..n_keys + n_values].to_vec(),
            noise: ids[n_keys + n_values..].to_vec(),
        }
    }

    fn memory_len(&self) -> usize {
        self.n_pairs * (self.key_len + 1)
    }

    fn distractor_len(&self) -> usize {
        self.n_distractors * (self.key_len + 1)
    }

    /// Tokens from the first memory token to the end, for the shortest
    /// allowed noise block.
    fn min_span(&self) -> usize {
        2 * self.memory_len() + self.distractor_len() + self.noise_len + 1
    }

    /// Longest target lag the split can produce.
    pub fn max_lag(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_max_lag,
            Split::Test => self.train_max_lag * self.test_lag_multiplier,
        }
    }

    // a target lag is at most span - key_len - 2
    fn max_span(&self, split: Split) -> usize {
        self.max_lag(split) + self.key_len + 2
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab();
        if v.keys.len() < 2 || v.values.is_empty() || v.noise.is_empty() {
            return Err(Error::Config(format!("vocab of {} too small for keys, values and noise", self.vocab_size)));
        }
        if self.key_len < 2 {
            return Err(Error::Config("keys need at least two tokens".into()));
        }
        if self.n_pairs == 0 {
            return Err(Error::Config("need at least one key/value pair".into()));
        }
        if self.n_distractors > 0
            && !(1..self.key_len).contains(&self.distractor_shared_prefix_len)
        {
            return Err(Error::Config(format!(
                "distractor prefix must be in 1..{}, got {}",
                self.key_len, self.distractor_shared_prefix_len
            )));
        }
        let key_space = (v.keys.len() as f64).powi(self.key_len as i32);
        if key_space < 2.0 * (self.n_pairs + self.n_distractors) as f64 {
            return Err(Error::Config("key space too small for distinct keys".into()));
        }
        if self.test_lag_multiplier < 2 {
            return Err(Error::Config("test lag multiplier must be at least 2".into()));
        }
        if self.min_span() > self.max_span(Split::Train) {
            return Err(Error::Config(format!(
                "layout overflow: memory, distractors, noise and queries need {} tokens but train_max_lag {} allows {}",
                self.min_span(),
                self.train_max_lag,
                self.max_span(Split::Train)
            )));
        }
        if self.max_span(Split::Test) > self.seq_len {
            return Err(Error::Config(format!(
                "layout overflow: test lags need {} tokens but seq_len is {}",
                self.max_span(Split::Test),
                self.seq_len
            )));
        }
        Ok(())
    }
}

fn random_key(rng: &mut ChaCha8Rng, pool: &[u32], len: usize) -> Vec<u32> {
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Sample `index` of `split`, deterministic in `(cfg.seed, split, index)`.
pub fn mqar_sample(cfg: &DiffuseMqarConfig, split: Split, index: u64) -> Result<TaskSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, split, index));
    let v = cfg.vocab();
    let pick = |rng: &mut ChaCha8Rng, pool: &[u32]| pool[rng.random_range(0..pool.len())];

    let mut used: HashSet<Vec<u32>> = HashSet::new();
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    while pairs.len() < cfg.n_pairs {
        let k = random_key(&mut rng, &v.keys, cfg.key_len);
        if used.insert(k.clone()) {
            pairs.push((k, pick(&mut rng, &v.values)));
        }
    }
    let p = cfg.distractor_shared_prefix_len;
    let mut distractors = Vec::with_capacity(cfg.n_distractors);
    while distractors.len() < cfg.n_distractors {
        let base = &pairs[rng.random_range(0..pairs.len())].0;
        let mut k = base[..p].to_vec();
        k.extend(random_key(&mut rng, &v.keys, cfg.key_len - p));
        if k[p..] != base[p..] && used.insert(k.clone()) {
            distractors.push((k, pick(&mut rng, &v.values)));
        }
    }

    let lo = match split {
        Split::Train => cfg.min_span(),
        Split::Test => cfg.min_span().max(cfg.max_span(Split::Train) + 1),
    };
    let span = rng.random_range(lo..=cfg.max_span(split));
    let block_len = span - 2 * cfg.memory_len() - 1;
    let fill = block_len - cfg.distractor_len();
    let mut cuts: Vec<usize> = (0..cfg.n_distractors).map(|_| rng.random_range(0..=fill)).collect();
    cuts.sort_unstable();

    let mut tokens = vec![PAD; cfg.seq_len - span];
    let mut value_pos = Vec::with_capacity(cfg.n_pairs);
    for (k, val) in &pairs {
        tokens.extend(k);
        value_pos.push(tokens.len());
        tokens.push(*val);
    }
    let mut prev = 0;
    for ((k, val), &c) in distractors.iter().zip(&cuts) {
        for _ in prev..c {
            tokens.push(pick(&mut rng, &v.noise));
        }
        tokens.extend(k);
        tokens.push(*val);
        prev = c;
    }
    for _ in prev..fill {
        tokens.push(pick(&mut rng, &v.noise));
    }
    tokens.push(SEP);
    let mut order: Vec<usize> = (0..cfg.n_pairs).collect();
    order.shuffle(&mut rng);
    let mut targets = Vec::with_capacity(cfg.n_pairs);
    for i in order {
        let (k, val) = &pairs[i];
        tokens.extend(k);
        let position = tokens.len() - 1;
        targets.push(Target { position, token: *val, lag: position - value_pos[i] });
        tokens.push(*val);
    }
    debug_assert_eq!(tokens.len(), cfg.seq_len);
    Ok(TaskSample { tokens, targets })
}

pub fn gen_diffuse_mqar(cfg: &DiffuseMqarConfig, split: Split, n: usize) -> Result<Vec<TaskSample>> {
    (0..n as u64).map(|i| mqar_sample(cfg, split, i)).collect()
}
