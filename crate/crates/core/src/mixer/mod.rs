//! The Sessa block: gated pre-projection, forward RoPE attention, strict-past
//! feedback attention with a tanh gain, causal triangular solve and a gated
//! residual output, with an exact analytic backward pass.

mod block;
mod feedback;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DEFAULT_ROPE_BASE;

pub use block::{block_backward, block_forward, forward_attention, MixerCache};
pub(crate) use block::{backward_unchecked, forward_unchecked, normalize, normalize_backward};
pub use feedback::{build_feedback, triangular_solve, triangular_solve_adjoint, FeedbackMatrix};
pub use params::{BlockGrads, BlockParams};

pub const DEFAULT_LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormMode {
    Identity,
    LayerNorm { eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    pub d_model: usize,
    pub d_k: usize,
    pub t_max: usize,
    pub rope_base: f64,
    pub norm: NormMode,
    /// When false the feedback branch is removed and `s = f`.
    pub feedback: bool,
}

impl MixerConfig {
    pub fn new(d_model: usize, d_k: usize, t_max: usize) -> Self {
        Self { d_model, d_k, t_max, rope_base: DEFAULT_ROPE_BASE, norm: NormMode::Identity, feedback: true }
    }

    pub fn with_layernorm(mut self, eps: f64) -> Self {
        self.norm = NormMode::LayerNorm { eps };
        self
    }

    pub fn without_feedback(mut self) -> Self {
        self.feedback = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 {
            return Err(Error::Config("d_model must be at least 1".into()));
        }
        if self.d_k == 0 || self.d_k % 2 != 0 {
            return Err(Error::Config(format!("d_k must be even and positive, got {}", self.d_k)));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(self.rope_base > 1.0 && self.rope_base.is_finite()) {
            return Err(Error::Config(format!("rope_base must exceed 1, got {}", self.rope_base)));
        }
        if let NormMode::LayerNorm { eps } = self.norm {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("layernorm eps must be positive, got {eps}")));
            }
        }
        Ok(())
    }
}
