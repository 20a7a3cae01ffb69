//! Desk-scale training: embedding, a stack of mixer layers, a linear readout,
//! Adam, metrics and checkpoints. Baseline layers (causal attention and a ZOH
//! selective SSM) are sized to match the Sessa layer's parameter count.

mod attention;
mod checkpoint;
mod model;
mod ssm;
mod trainer;

pub use attention::AttentionParams;
pub use checkpoint::{Checkpoint, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{cross_entropy, Layer, LayerShape, LossSum, MixerKind, Model, ModelCache, ModelConfig};
pub use ssm::SsmParams;
pub use trainer::{
    batch_grad, eval_sets, evaluate, split_name, train, write_metrics, Adam, DataCursor, MetricRow, TaskConfig,
    TrainConfig, TrainOutcome, EVAL_INDEX_OFFSET, PARAM_MATCH_TOLERANCE,
};
