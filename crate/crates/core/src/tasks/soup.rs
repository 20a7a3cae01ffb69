use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{mix_seed, sample_seed, Split, Target, TaskSample, FIRST_SYMBOL, SEP, SEP1, SEP2};
use crate::error::{Error, Result};

const MOTIF_LEN: usize = 3;
const UNIGRAM_SCALE: f64 = 1.5;
const BIGRAM_BONUS: f64 = 2.5;
const BIGRAM_FANOUT: usize = 3;
const STYLE_SALT: u64 = 0x5354_594c_4500_0000;

/// Style classification over two stylized blocks hidden in noise.
///
/// Layout: `noise <sep1> style <sep2> noise <sep1> style <sep2> noise <sep> label`.
/// One block carries a style from each family, in random order; the label is
/// the ordered pair (family-0 style, family-1 style).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolSoupConfig {
    pub vocab_size: usize,
    pub noise_block_len: usize,
    pub style_block_len: usize,
    pub n_style_families: usize,
    /// Number of styles in each family; the label space is their product.
    pub styles_per_family: Vec<usize>,
    /// Expected motif insertions per stylized block.
    pub motif_rate: f64,
    /// Per-token probability of resampling a stylized symbol uniformly.
    pub symbol_noise_rate: f64,
    pub seed: u64,
}

impl Default for SymbolSoupConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            noise_block_len: 48,
            style_block_len: 32,
            n_style_families: 2,
            styles_per_family: vec![4, 5],
            motif_rate: 1.0,
            symbol_noise_rate: 0.1,
            seed: 0,
        }
    }
}

impl SymbolSoupConfig {
    pub fn n_labels(&self) -> usize {
        self.styles_per_family.iter().product()
    }

    pub fn chance_accuracy(&self) -> f64 {
        1.0 / self.n_labels() as f64
    }

    pub fn seq_len(&self) -> usize {
        3 * self.noise_block_len + 2 * self.style_block_len + 6
    }

    pub fn first_label(&self) -> u32 {
        (self.vocab_size - self.n_labels()) as u32
    }

    fn n_symbols(&self) -> usize {
        self.vocab_size.saturating_sub(FIRST_SYMBOL as usize + self.n_labels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_style_families != 2 || self.styles_per_family.len() != 2 {
            return Err(Error::Config("exactly two style families are supported".into()));
        }
        if self.styles_per_family.contains(&0) {
            return Err(Error::Config("every family needs at least one style".into()));
        }
        if self.vocab_size < FIRST_SYMBOL as usize + self.n_labels() + BIGRAM_FANOUT + 1 {
            return Err(Error::Config(format!(
                "vocab of {} too small for separators, {} labels and symbols",
                self.vocab_size,
                self.n_labels()
            )));
        }
        if self.style_block_len < MOTIF_LEN {
            return Err(Error::Config(format!("style blocks need at least {MOTIF_LEN} tokens")));
        }
        if !(self.motif_rate >= 0.0 && self.motif_rate.is_finite()) {
            return Err(Error::Config("motif rate must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.symbol_noise_rate) {
            return Err(Error::Config("symbol noise rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

struct Style {
    unigram: Vec<f64>,
    bonus: Vec<[usize; BIGRAM_FANOUT]>,
    motif: [usize; MOTIF_LEN],
}

impl Style {
    fn new(cfg: &SymbolSoupConfig, family: usize, index: usize) -> Self {
        let n = cfg.n_symbols();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, STYLE_SALT, family as u64, index as u64]));
        let normal = Normal::new(0.0, UNIGRAM_SCALE).expect("finite scale");
        let unigram = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let bonus = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0..n))).collect();
        let motif = std::array::from_fn(|_| rng.random_range(0..n));
        Self { unigram, bonus, motif }
    }

    fn draw(&self, prev: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
        let mut logits = self.unigram.clone();
        if let Some(p) = prev {
            for &j in &self.bonus[p] {
                logits[j] += BIGRAM_BONUS;
            }
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                return i;
            }
            u -= wi;
        }
        w.len() - 1
    }

    fn block(&self, cfg: &SymbolSoupConfig, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let n = cfg.n_symbols();
        let mut out = Vec::with_capacity(cfg.style_block_len);
        let mut prev = None;
        for _ in 0..cfg.style_block_len {
            let s = self.draw(prev, rng);
            out.push(s);
            prev = Some(s);
        }
        if cfg.motif_rate > 0.0 {
            let count = Poisson::new(cfg.motif_rate).expect("positive rate").sample(rng) as usize;
            for _ in 0..count {
                let at = rng.random_range(0..=cfg.style_block_len - MOTIF_LEN);
                out[at..at + MOTIF_LEN].copy_from_slice(&self.motif);
            }
        }
        for s in &mut out {
            if rng.random::<f64>() < cfg.symbol_noise_rate {
                *s = rng.random_range(0..n);
            }
        }
        out.into_iter().map(|s| FIRST_SYMBOL + s as u32).collect()
    }
}

fn styles_for(cfg: &SymbolSoupConfig, label: usize) -> [Style; 2] {
    let k1 = cfg.styles_per_family[1];
    [Style::new(cfg, 0, label / k1), Style::new(cfg, 1, label % k1)]
}

/// Sample `index` of `split`. Labels cycle through the label space with the
/// index, so any `n_labels` consecutive samples are exactly balanced.
pub fn soup_sample(cfg: &SymbolSoupConfig, split: Split, index: u64) -> Result<TaskSample> {
    cfg.validate()?;
    let label = (index % cfg.n_labels() as u64) as usize;
    Ok(sample_with(cfg, &styles_for(cfg, label), label, sample_seed(cfg.seed, split, index)))
}

fn sample_with(cfg: &SymbolSoupConfig, styles: &[Style; 2], label: usize, seed: u64) -> TaskSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_symbols() as u32;
    let noise = |rng: &mut ChaCha8Rng, out: &mut Vec<u32>| {
        for _ in 0..cfg.noise_block_len {
            out.push(FIRST_SYMBOL + rng.random_range(0..n));
        }
    };
    let order = if rng.random::<bool>() { [0, 1] } else { [1, 0] };
    let mut tokens = Vec::with_capacity(cfg.seq_len());
    let mut first_style = 0;
    for (i, &f) in order.iter().enumerate() {
        noise(&mut rng, &mut tokens);
        tokens.push(SEP1);
        if i == 0 {
            first_style = tokens.len();
        }
        tokens.extend(styles[f].block(cfg, &mut rng));
        tokens.push(SEP2);
    }
    noise(&mut rng, &mut tokens);
    tokens.push(SEP);
    let position = tokens.len() - 1;
    let token = cfg.first_label() + label as u32;
    tokens.push(token);
    TaskSample { tokens, targets: vec![Target { position, token, lag: position - first_style }] }
}

pub fn gen_symbolsoup(cfg: &SymbolSoupConfig, split: Split, n: usize) -> Result<Vec<TaskSample>> {
    cfg.validate()?;
    let styles: Vec<[Style; 2]> = (0..cfg.n_labels()).map(|l| styles_for(cfg, l)).collect();
    Ok((0..n as u64)
        .map(|i| {
            let label = (i % cfg.n_labels() as u64) as usize;
            sample_with(cfg, &styles[label], label, sample_seed(cfg.seed, split, i))
        })
        .collect())
}
