use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::attention::{AttentionCache, AttentionParams};
use super::ssm::{SsmCache, SsmParams};
use crate::error::{Error, Result};
use crate::mixer::{backward_unchecked, forward_unchecked, BlockParams, MixerCache, MixerConfig, NormMode};
use crate::numerics::{axpy, softmax_in_place, Matrix, Rope, DEFAULT_ROPE_BASE};
use crate::tasks::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixerKind {
    Sessa,
    SessaNoFeedback,
    Attention,
    ZohSsm,
}

impl MixerKind {
    pub const ALL: [MixerKind; 4] = [MixerKind::Sessa, MixerKind::SessaNoFeedback, MixerKind::Attention, MixerKind::ZohSsm];

    pub fn name(self) -> &'static str {
        match self {
            MixerKind::Sessa => "sessa",
            MixerKind::SessaNoFeedback => "sessa_no_feedback",
            MixerKind::Attention => "attention",
            MixerKind::ZohSsm => "zoh_ssm",
        }
    }
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MixerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MixerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mixer kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub depth: usize,
    /// Query/key width of the Sessa block; other kinds derive their widths
    /// from it so that parameter counts match.
    pub d_k: usize,
    pub norm: NormMode,
    pub mixer: MixerKind,
}

/// Per-layer widths after parameter matching.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    Sessa { d_k: usize, feedback: bool },
    Attention { d_k: usize },
    Ssm { n_state: usize, rank: usize },
}

fn closest(target: usize, candidates: impl Iterator<Item = usize>, count: impl Fn(usize) -> usize) -> usize {
    candidates.min_by_key(|&c| (count(c).abs_diff(target), c)).expect("non-empty candidate range")
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab must hold at least two tokens".into()));
        }
        if self.seq_len == 0 {
            return Err(Error::Config("sequence length must be positive".into()));
        }
        self.sessa_mixer(true).validate()
    }

    fn sessa_mixer(&self, feedback: bool) -> MixerConfig {
        MixerConfig {
            d_model: self.d_model,
            d_k: self.d_k,
            t_max: self.seq_len,
            rope_base: DEFAULT_ROPE_BASE,
            norm: self.norm,
            feedback,
        }
    }

    fn layer_count(&self, shape: LayerShape) -> usize {
        let d = self.d_model;
        match shape {
            LayerShape::Sessa { d_k, feedback } => {
                BlockParams::zeros(&MixerConfig { d_k, feedback, ..self.sessa_mixer(feedback) }).param_count()
            }
            LayerShape::Attention { d_k } => count(&AttentionParams::zeros(d, d_k).tensors()),
            LayerShape::Ssm { n_state, rank } => count(&SsmParams::zeros(d, n_state, rank).tensors()),
        }
    }

    /// Widths for `self.mixer`, chosen to match the Sessa layer's parameter count.
    pub fn layer_shape(&self) -> LayerShape {
        let d = self.d_model;
        let target = self.layer_count(LayerShape::Sessa { d_k: self.d_k, feedback: true });
        let even = (1..=4 * d).map(|h| 2 * h);
        match self.mixer {
            MixerKind::Sessa => LayerShape::Sessa { d_k: self.d_k, feedback: true },
            MixerKind::SessaNoFeedback => {
                let d_k = closest(target, even, |k| self.layer_count(LayerShape::Sessa { d_k: k, feedback: false }));
                LayerShape::Sessa { d_k, feedback: false }
            }
            MixerKind::Attention => {
                LayerShape::Attention { d_k: closest(target, even, |k| self.layer_count(LayerShape::Attention { d_k: k })) }
            }
            MixerKind::ZohSsm => {
                let rank = (d / 16).max(1);
                let n_state = closest(target, 1..=4 * d, |n| self.layer_count(LayerShape::Ssm { n_state: n, rank }));
                LayerShape::Ssm { n_state, rank }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let v = self.vocab_size;
        let d = self.d_model;
        2 * v * d + v + self.depth * self.layer_count(self.layer_shape())
    }
}

fn count(tensors: &[(&'static str, Vec<usize>, &[f64])]) -> usize {
    tensors.iter().map(|(_, _, d)| d.len()).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Sessa(BlockParams),
    Attention(AttentionParams),
    Ssm(SsmParams),
}

impl Layer {
    fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        match self {
            Layer::Sessa(p) => p.tensors(),
            Layer::Attention(p) => p.tensors(),
            Layer::Ssm(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        match self {
            Layer::Sessa(p) => p.tensors_mut(),
            Layer::Attention(p) => p.tensors_mut(),
            Layer::Ssm(p) => p.tensors_mut(),
        }
    }
}

enum LayerCache {
    Sessa(Box<MixerCache>),
    Attention(AttentionCache),
    Ssm(SsmCache),
}

/// Token embedding, a stack of mixer layers and a linear readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: Matrix,
    pub layers: Vec<Layer>,
    pub unembed: Matrix,
    pub unembed_bias: Vec<f64>,
}

/// Activations retained by [`Model::forward`] for the backward pass.
pub struct ModelCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    top: Matrix,
}

/// Summed cross-entropy over supervised positions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSum {
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

impl LossSum {
    pub fn add(&mut self, other: LossSum) {
        self.loss += other.loss;
        self.correct += other.correct;
        self.count += other.count;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss / self.count.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }
}

impl Model {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, d) = (config.vocab_size, config.d_model);
        let shape = config.layer_shape();
        let layers = (0..config.depth)
            .map(|_| match shape {
                LayerShape::Sessa { d_k, feedback } => {
                    Layer::Sessa(BlockParams::zeros(&MixerConfig { d_k, ..config.sessa_mixer(feedback) }))
                }
                LayerShape::Attention { d_k } => Layer::Attention(AttentionParams::zeros(d, d_k)),
                LayerShape::Ssm { n_state, rank } => Layer::Ssm(SsmParams::zeros(d, n_state, rank)),
            })
            .collect();
        Self {
            config: config.clone(),
            embed: Matrix::zeros(v, d),
            layers,
            unembed: Matrix::zeros(d, v),
            unembed_bias: vec![0.0; v],
        }
    }

    /// Standard-normal embeddings, `N(0, 1/D)` readout, zero readout bias and
    /// each layer's own initializer.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (v, d) = (config.vocab_size, config.d_model);
        let mut model = Self::zeros(config);
        model.embed = Matrix::from_fn(v, d, |_, _| StandardNormal.sample(rng));
        let shape = config.layer_shape();
        for layer in &mut model.layers {
            *layer = match shape {
                LayerShape::Sessa { d_k, feedback } => {
                    Layer::Sessa(BlockParams::init(&MixerConfig { d_k, ..config.sessa_mixer(feedback) }, rng))
                }
                LayerShape::Attention { d_k } => Layer::Attention(AttentionParams::init(d, d_k, rng)),
                LayerShape::Ssm { n_state, rank } => Layer::Ssm(SsmParams::init(d, n_state, rank, rng)),
            };
        }
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        model.unembed = Matrix::from_fn(d, v, |_, _| normal.sample(rng));
        Ok(model)
    }

    /// Every trainable tensor as `(name, shape, data)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = vec![("embed".to_string(), vec![self.embed.rows(), self.embed.cols()], self.embed.as_slice())];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, shape, data) in layer.tensors() {
                out.push((format!("layers.{i}.{name}"), shape, data));
            }
        }
        out.push(("unembed".to_string(), vec![self.unembed.rows(), self.unembed.cols()], self.unembed.as_slice()));
        out.push(("unembed_bias".to_string(), vec![self.unembed_bias.len()], &self.unembed_bias));
        out
    }

    /// Mutable views in the order of [`Model::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embed.as_mut_slice()];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut().into_iter().map(|(_, d)| d));
        }
        out.push(self.unembed.as_mut_slice());
        out.push(&mut self.unembed_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    /// `self += s * other` over all tensors.
    pub fn add_scaled(&mut self, s: f64, other: &Model) {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|(_, _, d)| d).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            axpy(s, src, dst);
        }
    }

    fn rope(&self) -> Result<Option<Rope>> {
        Ok(match self.config.layer_shape() {
            LayerShape::Sessa { d_k, .. } | LayerShape::Attention { d_k } => Some(Rope::new(d_k, DEFAULT_ROPE_BASE)?),
            LayerShape::Ssm { .. } => None,
        })
    }

    /// Logits (`T x vocab`) for a token sequence.
    pub fn forward(&self, tokens: &[u32]) -> Result<(Matrix, ModelCache)> {
        let cfg = &self.config;
        if tokens.is_empty() || tokens.len() > cfg.seq_len {
            return Err(Error::Shape(format!("sequence length {} outside [1, {}]", tokens.len(), cfg.seq_len)));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::InvalidInput(format!("token id {t} outside vocab of {}", cfg.vocab_size)));
        }
        let rope = self.rope()?;
        let mut h = Matrix::from_fn(tokens.len(), cfg.d_model, |t, c| self.embed[(tokens[t] as usize, c)]);
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = match layer {
                Layer::Sessa(p) => {
                    let mc = MixerConfig { d_k: p.w_qf.cols(), ..cfg.sessa_mixer(p.has_feedback()) };
                    let (y, c) = forward_unchecked(&h, p, &mc, rope.as_ref().expect("sessa uses rope"));
                    (y, LayerCache::Sessa(Box::new(c)))
                }
                Layer::Attention(p) => {
                    let (y, c) = p.forward(&h, cfg.norm, rope.as_ref().expect("attention uses rope"));
                    (y, LayerCache::Attention(c))
                }
                Layer::Ssm(p) => {
                    let (y, c) = p.forward(&h, cfg.norm);
                    (y, LayerCache::Ssm(c))
                }
            };
            caches.push(cache);
            h = y;
        }
        let mut logits = h.matmul(&self.unembed);
        for t in 0..logits.rows() {
            axpy(1.0, &self.unembed_bias, logits.row_mut(t));
        }
        Ok((logits, ModelCache { tokens: tokens.to_vec(), layers: caches, top: h }))
    }

    /// Gradients of a loss with `dL/dlogits = g_logits`.
    pub fn backward(&self, cache: ModelCache, g_logits: &Matrix) -> Result<Model> {
        let cfg = &self.config;
        let rope = self.rope()?;
        let mut grads = Model::zeros(cfg);
        grads.unembed = cache.top.t_matmul(g_logits);
        grads.unembed_bias = g_logits.sum_rows();
        let mut g_h = g_logits.matmul_t(&self.unembed);
        for ((layer, lc), gl) in self.layers.iter().zip(cache.layers).zip(grads.layers.iter_mut()).rev() {
            let (g_x, g) = match (layer, lc) {
                (Layer::Sessa(p), LayerCache::Sessa(c)) => {
                    let (g_x, g) = backward_unchecked(&c, p, &g_h, rope.as_ref().expect("sessa uses rope"));
                    (g_x, Layer::Sessa(g))
                }
                (Layer::Attention(p), LayerCache::Attention(c)) => {
                    let (g_x, g) = p.backward(&c, &g_h, cfg.norm, rope.as_ref().expect("attention uses rope"));
                    (g_x, Layer::Attention(g))
                }
                (Layer::Ssm(p), LayerCache::Ssm(c)) => {
                    let (g_x, g) = p.backward(&c, &g_h, cfg.norm);
                    (g_x, Layer::Ssm(g))
                }
                _ => return Err(Error::Cache("layer cache does not match the model".into())),
            };
            *gl = g;
            g_h = g_x;
        }
        for (t, &tok) in cache.tokens.iter().enumerate() {
            axpy(1.0, g_h.row(t), grads.embed.row_mut(tok as usize));
        }
        Ok(grads)
    }

    /// Summed cross-entropy at `targets`, without gradients.
    pub fn loss(&self, tokens: &[u32], targets: &[Target]) -> Result<LossSum> {
        let (logits, _) = self.forward(tokens)?;
        Ok(cross_entropy(&logits, targets)?.0)
    }

    /// Summed cross-entropy at `targets` and its gradient.
    pub fn loss_and_grad(&self, tokens: &[u32], targets: &[Target]) -> Result<(LossSum, Model)> {
        let (logits, cache) = self.forward(tokens)?;
        let (sum, g_logits) = cross_entropy(&logits, targets)?;
        Ok((sum, self.backward(cache, &g_logits)?))
    }
}

/// Summed cross-entropy and `dL/dlogits` for the supervised positions.
/// Accuracy counts exact argmax hits; ties go to the lowest id.
pub fn cross_entropy(logits: &Matrix, targets: &[Target]) -> Result<(LossSum, Matrix)> {
    let mut g = Matrix::zeros(logits.rows(), logits.cols());
    let mut sum = LossSum::default();
    for t in targets {
        if t.position >= logits.rows() || t.token as usize >= logits.cols() {
            return Err(Error::InvalidInput(format!("target {t:?} outside logits {:?}", logits.shape())));
        }
        let row = logits.row(t.position);
        let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let mut p = row.to_vec();
        softmax_in_place(&mut p);
        sum.loss += lse - row[t.token as usize];
        sum.correct += (best == t.token as usize) as usize;
        sum.count += 1;
        p[t.token as usize] -= 1.0;
        axpy(1.0, &p, g.row_mut(t.position));
    }
    Ok((sum, g))
}
