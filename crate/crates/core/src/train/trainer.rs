use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{LossSum, MixerKind, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::mixer::{NormMode, DEFAULT_LN_EPS};
use crate::tasks::{mqar_sample, soup_sample, DiffuseMqarConfig, Split, SymbolSoupConfig, TaskSample};

/// Allowed relative spread of parameter counts across mixer kinds.
pub const PARAM_MATCH_TOLERANCE: f64 = 0.02;

/// Evaluation samples are drawn from this index upward so they never
/// coincide with training samples.
pub const EVAL_INDEX_OFFSET: u64 = 1 << 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskConfig {
    Mqar(DiffuseMqarConfig),
    SymbolSoup(SymbolSoupConfig),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Mqar(_) => "mqar",
            TaskConfig::SymbolSoup(_) => "symbolsoup",
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            TaskConfig::Mqar(c) => c.vocab_size,
            TaskConfig::SymbolSoup(c) => c.vocab_size,
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            TaskConfig::Mqar(c) => c.seq_len,
            TaskConfig::SymbolSoup(c) => c.seq_len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskConfig::Mqar(c) => c.validate(),
            TaskConfig::SymbolSoup(c) => c.validate(),
        }
    }

    pub fn sample(&self, split: Split, index: u64) -> Result<TaskSample> {
        match self {
            TaskConfig::Mqar(c) => mqar_sample(c, split, index),
            TaskConfig::SymbolSoup(c) => soup_sample(c, split, index),
        }
    }

    pub fn samples(&self, split: Split, start: u64, n: usize) -> Result<Vec<TaskSample>> {
        (start..start + n as u64).into_par_iter().map(|i| self.sample(split, i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskConfig,
    pub mixer_kind: MixerKind,
    pub depth: usize,
    pub d_model: usize,
    pub d_k: usize,
    pub norm_mode: NormMode,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub steps: usize,
    pub batch: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::Mqar(DiffuseMqarConfig::default()),
            mixer_kind: MixerKind::Sessa,
            depth: 2,
            d_model: 64,
            d_k: 16,
            norm_mode: NormMode::LayerNorm { eps: DEFAULT_LN_EPS },
            lr: 2e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            grad_clip: Some(1.0),
            steps: 2000,
            batch: 6,
            eval_every: 100,
            eval_samples: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        self.model_config_for(self.mixer_kind)
    }

    fn model_config_for(&self, mixer: MixerKind) -> ModelConfig {
        ModelConfig {
            vocab_size: self.task.vocab_size(),
            seq_len: self.task.seq_len(),
            d_model: self.d_model,
            depth: self.depth,
            d_k: self.d_k,
            norm: self.norm_mode,
            mixer,
        }
    }

    /// Total parameter count of the model each mixer kind would build.
    pub fn param_counts(&self) -> Vec<(MixerKind, usize)> {
        MixerKind::ALL.iter().map(|&k| (k, self.model_config_for(k).param_count())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model_config().validate()?;
        if self.batch == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch and eval_every must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and nonnegative, got {}", self.lr)));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam needs betas in [0, 1) and a positive eps".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("gradient clip must be positive, got {c}")));
            }
        }
        let counts = self.param_counts();
        let base = counts[0].1 as f64;
        for &(kind, n) in &counts {
            let rel = (n as f64 - base).abs() / base;
            if rel > PARAM_MATCH_TOLERANCE {
                return Err(Error::Config(format!(
                    "{kind} has {n} parameters vs {} for sessa ({:.2}% apart, limit {:.0}%)",
                    base,
                    100.0 * rel,
                    100.0 * PARAM_MATCH_TOLERANCE
                )));
            }
        }
        Ok(())
    }
}

/// Position in the training sample stream: sample `i` of the train split is
/// fully determined by `(seed, i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCursor {
    pub seed: u64,
    pub next_index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Model, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|(_, _, d)| vec![0.0; d.len()]).collect();
        Self { lr, betas, eps, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Model) {
        self.t += 1;
        let (b1, b2) = self.betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let g: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, _, d)| d).collect();
        for (((p, g), m), v) in model.tensors_mut().into_iter().zip(g).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Mean loss and accuracy over `samples`, summed in sample order.
pub fn evaluate(model: &Model, samples: &[TaskSample]) -> Result<LossSum> {
    let parts: Vec<LossSum> =
        samples.par_iter().map(|s| model.loss(&s.tokens, &s.targets)).collect::<Result<_>>()?;
    let mut total = LossSum::default();
    parts.into_iter().for_each(|p| total.add(p));
    Ok(total)
}

/// Mean-over-targets loss and gradient of one batch. Per-sample gradients are
/// computed in parallel and summed in sample order.
pub fn batch_grad(model: &Model, samples: &[TaskSample]) -> Result<(LossSum, Model)> {
    let parts: Vec<(LossSum, Model)> =
        samples.par_iter().map(|s| model.loss_and_grad(&s.tokens, &s.targets)).collect::<Result<_>>()?;
    let mut total = LossSum::default();
    let mut grads = Model::zeros(&model.config);
    for (sum, g) in &parts {
        total.add(*sum);
        grads.add_scaled(1.0, g);
    }
    let scale = 1.0 / total.count.max(1) as f64;
    for t in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total, grads))
}

fn global_norm(m: &Model) -> f64 {
    m.tensors().iter().flat_map(|(_, _, d)| d.iter()).map(|v| v * v).sum::<f64>().sqrt()
}

pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<MetricRow>,
    pub cursor: DataCursor,
    pub steps: usize,
}

/// Fixed evaluation sets for the train-lag and long-lag splits.
pub fn eval_sets(cfg: &TrainConfig) -> Result<[(Split, Vec<TaskSample>); 2]> {
    Ok([
        (Split::Train, cfg.task.samples(Split::Train, EVAL_INDEX_OFFSET, cfg.eval_samples)?),
        (Split::Test, cfg.task.samples(Split::Test, EVAL_INDEX_OFFSET, cfg.eval_samples)?),
    ])
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

/// Trains from a fresh initialization. `on_eval` sees every metric row as it
/// is produced.
pub fn train(cfg: &TrainConfig, mut on_eval: impl FnMut(&MetricRow)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(&cfg.model_config(), &mut rng)?;
    let mut adam = Adam::new(&model, cfg.lr, cfg.betas, cfg.eps);
    let evals = eval_sets(cfg)?;
    let mut cursor = DataCursor { seed: cfg.seed, next_index: 0 };
    let mut history = Vec::new();
    let mut record = |step: usize, model: &Model, history: &mut Vec<MetricRow>| -> Result<()> {
        for (split, samples) in &evals {
            let s = evaluate(model, samples)?;
            let row = MetricRow { step, split: split_name(*split).into(), loss: s.mean_loss(), accuracy: s.accuracy() };
            on_eval(&row);
            history.push(row);
        }
        Ok(())
    };
    for step in 0..cfg.steps {
        if step % cfg.eval_every == 0 {
            record(step, &model, &mut history)?;
        }
        let batch = cfg.task.samples(Split::Train, cursor.next_index, cfg.batch)?;
        cursor.next_index += cfg.batch as u64;
        let (sum, mut grads) = batch_grad(&model, &batch)?;
        let loss = sum.mean_loss();
        let norm = global_norm(&grads);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        if let Some(clip) = cfg.grad_clip {
            if norm > clip {
                let s = clip / norm;
                grads.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= s));
            }
        }
        adam.step(&mut model, &grads);
        if !model.is_finite() {
            return Err(Error::Divergence { step, loss: f64::NAN });
        }
    }
    record(cfg.steps, &model, &mut history)?;
    Ok(TrainOutcome { model, history, cursor, steps: cfg.steps })
}
