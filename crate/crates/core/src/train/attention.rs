use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mixer::{normalize, normalize_backward, NormMode};
use crate::numerics::{axpy, dot, softmax_backward, softmax_in_place, Matrix, Rope};

/// Single-head causal RoPE attention layer: `y = x + softmax(q k^T) v W_o + b_o`
/// with `q, k, v` projected from the normalized input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
}

pub struct AttentionCache {
    xn: Matrix,
    inv_std: Vec<f64>,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    alpha: Matrix,
    f: Matrix,
}

impl AttentionParams {
    pub fn zeros(d: usize, d_k: usize) -> Self {
        Self {
            w_q: Matrix::zeros(d, d_k),
            w_k: Matrix::zeros(d, d_k),
            w_v: Matrix::zeros(d, d),
            w_o: Matrix::zeros(d, d),
            b_o: vec![0.0; d],
        }
    }

    pub fn init<R: Rng + ?Sized>(d: usize, d_k: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d, d_k);
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        for m in [&mut p.w_q, &mut p.w_k, &mut p.w_v, &mut p.w_o] {
            m.as_mut_slice().iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        p
    }

    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        vec![
            ("w_q", vec![self.w_q.rows(), self.w_q.cols()], self.w_q.as_slice()),
            ("w_k", vec![self.w_k.rows(), self.w_k.cols()], self.w_k.as_slice()),
            ("w_v", vec![self.w_v.rows(), self.w_v.cols()], self.w_v.as_slice()),
            ("w_o", vec![self.w_o.rows(), self.w_o.cols()], self.w_o.as_slice()),
            ("b_o", vec![self.b_o.len()], &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_q", self.w_q.as_mut_slice()),
            ("w_k", self.w_k.as_mut_slice()),
            ("w_v", self.w_v.as_mut_slice()),
            ("w_o", self.w_o.as_mut_slice()),
            ("b_o", &mut self.b_o),
        ]
    }

    pub fn forward(&self, x: &Matrix, norm: NormMode, rope: &Rope) -> (Matrix, AttentionCache) {
        let t_len = x.rows();
        let (xn, inv_std) = normalize(x, norm);
        let mut q = xn.matmul(&self.w_q);
        let mut k = xn.matmul(&self.w_k);
        for t in 0..t_len {
            rope.rotate_in_place(q.row_mut(t), t as f64);
            rope.rotate_in_place(k.row_mut(t), t as f64);
        }
        let v = xn.matmul(&self.w_v);
        let scale = 1.0 / (self.w_q.cols() as f64).sqrt();
        let mut alpha = Matrix::zeros(t_len, t_len);
        let mut f = Matrix::zeros(t_len, v.cols());
        for t in 0..t_len {
            let row = &mut alpha.row_mut(t)[..=t];
            for (j, r) in row.iter_mut().enumerate() {
                *r = scale * dot(q.row(t), k.row(j));
            }
            softmax_in_place(row);
            let ft = f.row_mut(t);
            for (j, &w) in row.iter().enumerate() {
                axpy(w, v.row(j), ft);
            }
        }
        let mut y = f.matmul(&self.w_o);
        for t in 0..t_len {
            let row = y.row_mut(t);
            axpy(1.0, &self.b_o, row);
            axpy(1.0, x.row(t), row);
        }
        (y, AttentionCache { xn, inv_std, q, k, v, alpha, f })
    }

    pub fn backward(&self, c: &AttentionCache, g_y: &Matrix, norm: NormMode, rope: &Rope) -> (Matrix, AttentionParams) {
        let t_len = g_y.rows();
        let mut grads = AttentionParams::zeros(self.w_q.rows(), self.w_q.cols());
        grads.b_o = g_y.sum_rows();
        grads.w_o = c.f.t_matmul(g_y);
        let g_f = g_y.matmul_t(&self.w_o);
        let mut g_att = Matrix::zeros(t_len, t_len);
        let mut tmp = vec![0.0; t_len];
        for t in 0..t_len {
            let gf = g_f.row(t);
            let row = &mut g_att.row_mut(t)[..=t];
            for (j, r) in row.iter_mut().enumerate() {
                *r = dot(gf, c.v.row(j));
            }
            softmax_backward(&c.alpha.row(t)[..=t], row, &mut tmp[..=t]);
            row.copy_from_slice(&tmp[..=t]);
        }
        let g_v = c.alpha.t_matmul(&g_f);
        g_att.scale(1.0 / (self.w_q.cols() as f64).sqrt());
        let mut g_q = g_att.matmul(&c.k);
        let mut g_k = g_att.t_matmul(&c.q);
        for t in 0..t_len {
            rope.unrotate_in_place(g_q.row_mut(t), t as f64);
            rope.unrotate_in_place(g_k.row_mut(t), t as f64);
        }
        grads.w_q = c.xn.t_matmul(&g_q);
        grads.w_k = c.xn.t_matmul(&g_k);
        grads.w_v = c.xn.t_matmul(&g_v);
        let mut g_xn = g_q.matmul_t(&self.w_q);
        g_xn.add_assign(&g_k.matmul_t(&self.w_k));
        g_xn.add_assign(&g_v.matmul_t(&self.w_v));
        let mut g_x = g_y.clone();
        normalize_backward(norm, &c.xn, &c.inv_std, &g_xn, &mut g_x);
        (g_x, grads)
    }
}
