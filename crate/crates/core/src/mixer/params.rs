use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MixerConfig;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Trainable parameters of one block. When the block has no feedback branch
/// the feedback projections have zero columns and `w_gamma` is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_qf: Matrix,
    pub w_kf: Matrix,
    pub w_qb: Matrix,
    pub w_kb: Matrix,
    pub w_v: Matrix,
    pub w_gamma: Vec<f64>,
    pub b_gamma: f64,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type BlockGrads = BlockParams;

/// Default gain bias: `tanh(-1)` keeps the initial feedback gain well inside the unit ball.
pub const INIT_GAIN_BIAS: f64 = -1.0;

impl BlockParams {
    pub fn zeros(cfg: &MixerConfig) -> Self {
        let d = cfg.d_model;
        let dkb = if cfg.feedback { cfg.d_k } else { 0 };
        Self {
            w_in: Matrix::zeros(d, 2 * d),
            b_in: vec![0.0; 2 * d],
            w_qf: Matrix::zeros(d, cfg.d_k),
            w_kf: Matrix::zeros(d, cfg.d_k),
            w_qb: Matrix::zeros(d, dkb),
            w_kb: Matrix::zeros(d, dkb),
            w_v: Matrix::zeros(d, d),
            w_gamma: vec![0.0; if cfg.feedback { d } else { 0 }],
            b_gamma: 0.0,
            w_out: Matrix::zeros(d, d),
            b_out: vec![0.0; d],
        }
    }

    /// Gaussian init with variance `1 / fan_in` for every weight, zero biases and
    /// a gain bias of [`INIT_GAIN_BIAS`].
    pub fn init<R: Rng + ?Sized>(cfg: &MixerConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg);
        let normal = Normal::new(0.0, 1.0 / (cfg.d_model as f64).sqrt()).expect("valid std");
        for (name, data) in p.tensors_mut() {
            if name.starts_with("w_") {
                data.iter_mut().for_each(|v| *v = normal.sample(rng));
            }
        }
        if p.has_feedback() {
            p.b_gamma = INIT_GAIN_BIAS;
        }
        p
    }

    pub fn has_feedback(&self) -> bool {
        self.w_qb.cols() > 0
    }

    pub fn d_model(&self) -> usize {
        self.w_v.rows()
    }

    /// Named views of every trainable tensor with its shape.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = vec![
            ("w_in", vec![self.w_in.rows(), self.w_in.cols()], self.w_in.as_slice()),
            ("b_in", vec![self.b_in.len()], &self.b_in),
            ("w_qf", vec![self.w_qf.rows(), self.w_qf.cols()], self.w_qf.as_slice()),
            ("w_kf", vec![self.w_kf.rows(), self.w_kf.cols()], self.w_kf.as_slice()),
            ("w_v", vec![self.w_v.rows(), self.w_v.cols()], self.w_v.as_slice()),
            ("w_out", vec![self.w_out.rows(), self.w_out.cols()], self.w_out.as_slice()),
            ("b_out", vec![self.b_out.len()], &self.b_out),
        ];
        if self.has_feedback() {
            out.push(("w_qb", vec![self.w_qb.rows(), self.w_qb.cols()], self.w_qb.as_slice()));
            out.push(("w_kb", vec![self.w_kb.rows(), self.w_kb.cols()], self.w_kb.as_slice()));
            out.push(("w_gamma", vec![self.w_gamma.len()], &self.w_gamma));
            out.push(("b_gamma", vec![1], std::slice::from_ref(&self.b_gamma)));
        }
        out
    }

    /// Mutable views in the same order as [`BlockParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let fb = self.has_feedback();
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("w_in", self.w_in.as_mut_slice()),
            ("b_in", &mut self.b_in),
            ("w_qf", self.w_qf.as_mut_slice()),
            ("w_kf", self.w_kf.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
            ("w_out", self.w_out.as_mut_slice()),
            ("b_out", &mut self.b_out),
        ];
        if fb {
            out.push(("w_qb", self.w_qb.as_mut_slice()));
            out.push(("w_kb", self.w_kb.as_mut_slice()));
            out.push(("w_gamma", &mut self.w_gamma));
            out.push(("b_gamma", std::slice::from_mut(&mut self.b_gamma)));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    /// Checks shapes against `cfg` and that every entry is finite.
    pub fn validate(&self, cfg: &MixerConfig) -> Result<()> {
        let want = Self::zeros(cfg);
        let got_shapes: Vec<_> = self.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        let want_shapes: Vec<_> = want.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if got_shapes != want_shapes || self.w_gamma.len() != want.w_gamma.len() {
            return Err(Error::Shape(format!(
                "block parameters do not match config (d_model={}, d_k={}, feedback={})",
                cfg.d_model, cfg.d_k, cfg.feedback
            )));
        }
        for (name, _, data) in self.tensors() {
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite entry in {name}")));
            }
        }
        Ok(())
    }

    /// `self += s * other` over all tensors.
    pub fn add_scaled(&mut self, s: f64, other: &BlockParams) {
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|(_, _, d)| d.to_vec()).collect();
        for ((_, dst), src) in self.tensors_mut().into_iter().zip(src) {
            crate::numerics::axpy(s, &src, dst);
        }
    }
}
