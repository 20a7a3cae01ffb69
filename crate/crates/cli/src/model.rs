use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sessa_core::mixer::{BlockParams, MixerConfig, DEFAULT_LN_EPS};
use sessa_core::numerics::Matrix;
use sessa_core::probe::{sessa_tail_check, TailCheckConfig};
use sessa_core::tasks::{DiffuseMqarConfig, Split, SymbolSoupConfig};
use sessa_core::train::{
    evaluate, split_name, train as run_training, Checkpoint, MetricRow, MixerKind, TaskConfig, TrainConfig,
    EVAL_INDEX_OFFSET,
};
use sessa_core::{Error, Result};

use crate::output::Output;
use crate::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Mqar,
    Symbolsoup,
}

impl TaskKind {
    fn default_config(self) -> TaskConfig {
        match self {
            TaskKind::Mqar => TaskConfig::Mqar(DiffuseMqarConfig::default()),
            TaskKind::Symbolsoup => TaskConfig::SymbolSoup(SymbolSoupConfig::default()),
        }
    }

    fn name(self) -> &'static str {
        match self {
            TaskKind::Mqar => "mqar",
            TaskKind::Symbolsoup => "symbolsoup",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// JSON training config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    /// sessa, sessa_no_feedback, attention or zoh_ssm.
    #[arg(long)]
    pub mixer: Option<MixerKind>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_k: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    /// Print a progress line per evaluation to stderr.
    #[arg(long)]
    pub verbose: bool,
}

impl TrainArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        if let Some(task) = self.task {
            let current = match cfg.task {
                TaskConfig::Mqar(_) => TaskKind::Mqar,
                TaskConfig::SymbolSoup(_) => TaskKind::Symbolsoup,
            };
            if task != current {
                cfg.task = task.default_config();
            }
        }
        if let Some(m) = self.mixer {
            cfg.mixer_kind = m;
        }
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut cfg.steps, self.steps);
        set(&mut cfg.batch, self.batch);
        set(&mut cfg.depth, self.depth);
        set(&mut cfg.d_model, self.d_model);
        set(&mut cfg.d_k, self.d_k);
        set(&mut cfg.eval_every, self.eval_every);
        set(&mut cfg.eval_samples, self.eval_samples);
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(seed) = seed {
            cfg.seed = seed;
            match &mut cfg.task {
                TaskConfig::Mqar(c) => c.seed = seed,
                TaskConfig::SymbolSoup(c) => c.seed = seed,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn first_and_last<'a>(history: &'a [MetricRow], split: &str) -> Option<(&'a MetricRow, &'a MetricRow)> {
    let mut rows = history.iter().filter(|r| r.split == split);
    let first = rows.next()?;
    Some((first, rows.last().unwrap_or(first)))
}

pub fn train(args: &TrainArgs, seed: Option<u64>, out: &mut Output) -> Result<Verdict> {
    let cfg = args.resolve(seed)?;
    out.json("config", &cfg)?;
    let verbose = args.verbose;
    let outcome = run_training(&cfg, |row| {
        if verbose {
            eprintln!("step {:>6} {:<5} loss {:.4} acc {:.4}", row.step, row.split, row.loss, row.accuracy);
        }
    })?;
    out.table("metrics", &outcome.history)?;
    let ckpt = Checkpoint { config: cfg.clone(), step: outcome.steps, cursor: outcome.cursor, model: outcome.model };
    ckpt.save(&out.path("checkpoint.bin"))?;
    out.record("checkpoint.bin");
    let (first, last) = first_and_last(&outcome.history, "train").expect("training always records an evaluation");
    let test = first_and_last(&outcome.history, "test").map(|(_, l)| l);
    let summary = json!({
        "task": cfg.task.name(),
        "mixer": cfg.mixer_kind,
        "seed": cfg.seed,
        "params": ckpt.model.param_count(),
        "steps": outcome.steps,
        "initial_train_loss": first.loss,
        "final_train_loss": last.loss,
        "train_loss_drop": 1.0 - last.loss / first.loss,
        "final_train_accuracy": last.accuracy,
        "final_test_loss": test.map(|r| r.loss),
        "final_test_accuracy": test.map(|r| r.accuracy),
        "chance_accuracy": 1.0 / cfg.task.vocab_size() as f64,
        "passed": true,
    });
    Ok(Verdict::check(true, summary, String::new))
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Must match the checkpoint's task when given.
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Number of evaluation samples (the training eval-set size when omitted).
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn eval(args: &EvalArgs, out: &mut Output) -> Result<Verdict> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let task = &ckpt.config.task;
    if let Some(t) = args.task {
        if t.name() != task.name() {
            return Err(Error::Config(format!(
                "checkpoint was trained on {}, not {}",
                task.name(),
                t.name()
            )));
        }
    }
    let split = Split::from(args.split);
    let n = args.samples.unwrap_or(ckpt.config.eval_samples);
    let samples = task.samples(split, EVAL_INDEX_OFFSET, n)?;
    let s = evaluate(&ckpt.model, &samples)?;
    let row = MetricRow { step: ckpt.step, split: split_name(split).into(), loss: s.mean_loss(), accuracy: s.accuracy() };
    out.table("eval", std::slice::from_ref(&row))?;
    let summary = json!({
        "task": task.name(),
        "mixer": ckpt.config.mixer_kind,
        "step": ckpt.step,
        "split": row.split,
        "samples": n,
        "targets": s.count,
        "loss": row.loss,
        "accuracy": row.accuracy,
        "passed": true,
    });
    Ok(Verdict::check(true, summary, String::new))
}

#[derive(Args, Debug, Serialize)]
pub struct JacobianArgs {
    #[arg(long, default_value_t = 6)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub d_k: usize,
    /// Sequence length.
    #[arg(long = "T", default_value_t = 256)]
    pub t_len: usize,
    /// Constant feedback gain.
    #[arg(long, default_value_t = 0.5)]
    pub gain: f64,
    /// Number of random input sequences.
    #[arg(long, default_value_t = 3)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Half-width of the uniform input distribution.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Disable the pre-mixer LayerNorm.
    #[arg(long)]
    pub no_layernorm: bool,
}

pub fn jacobian(args: &JacobianArgs, seed: u64, out: &mut Output) -> Result<Verdict> {
    if !(args.gain > 0.0 && args.gain < 1.0) {
        return Err(Error::Domain(format!("gain must lie in (0, 1), got {}", args.gain)));
    }
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(Error::Domain(format!("input scale must be positive, got {}", args.scale)));
    }
    let mut cfg = MixerConfig::new(args.d_model, args.d_k, args.t_len);
    if !args.no_layernorm {
        cfg = cfg.with_layernorm(DEFAULT_LN_EPS);
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = BlockParams::init(&cfg, &mut rng);
    p.b_in.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    p.b_out.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    p.w_qb = Matrix::zeros(cfg.d_model, cfg.d_k);
    p.w_kb = Matrix::zeros(cfg.d_model, cfg.d_k);
    p.w_gamma = vec![0.0; cfg.d_model];
    p.b_gamma = args.gain.atanh();
    let s = args.scale;
    let inputs: Vec<Matrix> = (0..args.samples)
        .map(|_| Matrix::from_fn(args.t_len, args.d_model, |_, _| rng.random_range(-s..s)))
        .collect();
    let check = TailCheckConfig { source: args.source, c2: Some(1.0), gamma_max: Some(args.gain), ..TailCheckConfig::default() };
    let report = sessa_tail_check(&p, &cfg, &inputs, &check)?;
    out.table("jacobian", &report.rows)?;
    let passed = report.violations.is_empty();
    let worst = report.rows.iter().map(|r| r.norm / r.envelope).fold(0.0, f64::max);
    let summary = json!({
        "d_model": args.d_model, "d_k": args.d_k, "len": args.t_len, "gain": args.gain,
        "samples": args.samples, "source": args.source, "layernorm": !args.no_layernorm,
        "constants": report.constants, "log_factor": report.log_factor,
        "max_norm_to_envelope": worst, "violations": report.violations.len(), "passed": passed,
    });
    Ok(Verdict::check(passed, summary, || {
        let r = &report.violations[0];
        format!("sample row t={} tau={} lag {}: norm {:e} exceeds envelope {:e}", r.t, r.tau, r.lag, r.norm, r.envelope)
    }))
}
