use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mixer::{normalize, normalize_backward, NormMode};
use crate::numerics::{axpy, gelu, gelu_prime, sigmoid, softplus, Matrix};

const MIN_INIT_STEP: f64 = 1e-3;
const MAX_INIT_STEP: f64 = 1e-1;

/// Diagonal ZOH selective state-space layer with a multiplicative gate.
///
/// Per channel `d` and state `n`:
/// `h_t = e^{-a Δ_t} h_{t-1} + (1 - e^{-a Δ_t}) / a * B_t u_t`,
/// `y_t = <C_t, h_t> + skip * u_t`, and the layer returns
/// `x + (y ⊙ g) W_o + b_o`. The step `Δ_t = softplus(x̂ W_d1 W_d2 + b_Δ)` is
/// per channel; `B_t, C_t` are shared across channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub w_in: Matrix,
    pub b_in: Vec<f64>,
    pub w_d1: Matrix,
    pub w_d2: Matrix,
    pub b_delta: Vec<f64>,
    pub w_b: Matrix,
    pub w_c: Matrix,
    /// `ln a` per channel and state (`D x N`).
    pub log_rate: Matrix,
    pub skip: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
}

type TensorView<'a> = (&'static str, Vec<usize>, &'a [f64]);

fn m<'a>(name: &'static str, m: &'a Matrix) -> TensorView<'a> {
    (name, vec![m.rows(), m.cols()], m.as_slice())
}

fn v<'a>(name: &'static str, v: &'a [f64]) -> TensorView<'a> {
    (name, vec![v.len()], v)
}

pub struct SsmCache {
    xn: Matrix,
    inv_std: Vec<f64>,
    u_pre: Matrix,
    u: Matrix,
    g: Matrix,
    z: Matrix,
    d_pre: Matrix,
    delta: Matrix,
    b: Matrix,
    c: Matrix,
    /// `h_t` flattened as `t * D * N + d * N + n`.
    h: Vec<f64>,
    y: Matrix,
}

impl SsmParams {
    pub fn zeros(d: usize, n_state: usize, rank: usize) -> Self {
        Self {
            w_in: Matrix::zeros(d, 2 * d),
            b_in: vec![0.0; 2 * d],
            w_d1: Matrix::zeros(d, rank),
            w_d2: Matrix::zeros(rank, d),
            b_delta: vec![0.0; d],
            w_b: Matrix::zeros(d, n_state),
            w_c: Matrix::zeros(d, n_state),
            log_rate: Matrix::zeros(d, n_state),
            skip: vec![0.0; d],
            w_o: Matrix::zeros(d, d),
            b_o: vec![0.0; d],
        }
    }

    /// Gaussian `1/sqrt(fan_in)` weights, rates `a_n = n + 1`, unit skip and
    /// initial steps log-spaced over `[1e-3, 1e-1]` across channels.
    pub fn init<R: Rng + ?Sized>(d: usize, n_state: usize, rank: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d, n_state, rank);
        let wide = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        for m in [&mut p.w_in, &mut p.w_d1, &mut p.w_b, &mut p.w_c, &mut p.w_o] {
            m.as_mut_slice().iter_mut().for_each(|v| *v = wide.sample(rng));
        }
        let narrow = Normal::new(0.0, 1.0 / (rank as f64).sqrt()).expect("valid std");
        p.w_d2.as_mut_slice().iter_mut().for_each(|v| *v = narrow.sample(rng));
        let (lo, hi) = (MIN_INIT_STEP.ln(), MAX_INIT_STEP.ln());
        for (i, b) in p.b_delta.iter_mut().enumerate() {
            let frac = if d > 1 { i as f64 / (d - 1) as f64 } else { 0.0 };
            let step = (lo + (hi - lo) * frac).exp();
            *b = step.exp_m1().ln();
        }
        for i in 0..d {
            for n in 0..n_state {
                p.log_rate[(i, n)] = ((n + 1) as f64).ln();
            }
        }
        p.skip.iter_mut().for_each(|v| *v = 1.0);
        p
    }

    pub fn n_state(&self) -> usize {
        self.w_b.cols()
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        vec![
            m("w_in", &self.w_in),
            v("b_in", &self.b_in),
            m("w_d1", &self.w_d1),
            m("w_d2", &self.w_d2),
            v("b_delta", &self.b_delta),
            m("w_b", &self.w_b),
            m("w_c", &self.w_c),
            m("log_rate", &self.log_rate),
            v("skip", &self.skip),
            m("w_o", &self.w_o),
            v("b_o", &self.b_o),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w_in", self.w_in.as_mut_slice()),
            ("b_in", &mut self.b_in),
            ("w_d1", self.w_d1.as_mut_slice()),
            ("w_d2", self.w_d2.as_mut_slice()),
            ("b_delta", &mut self.b_delta),
            ("w_b", self.w_b.as_mut_slice()),
            ("w_c", self.w_c.as_mut_slice()),
            ("log_rate", self.log_rate.as_mut_slice()),
            ("skip", &mut self.skip),
            ("w_o", self.w_o.as_mut_slice()),
            ("b_o", &mut self.b_o),
        ]
    }

    pub fn forward(&self, x: &Matrix, norm: NormMode) -> (Matrix, SsmCache) {
        let (t_len, d) = x.shape();
        let ns = self.n_state();
        let (xn, inv_std) = normalize(x, norm);
        let mut ag = xn.matmul(&self.w_in);
        for t in 0..t_len {
            axpy(1.0, &self.b_in, ag.row_mut(t));
        }
        let u_pre = ag.columns(0, d);
        let g = ag.columns(d, d);
        let mut u = u_pre.clone();
        u.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
        let z = xn.matmul(&self.w_d1);
        let mut d_pre = z.matmul(&self.w_d2);
        for t in 0..t_len {
            axpy(1.0, &self.b_delta, d_pre.row_mut(t));
        }
        let mut delta = d_pre.clone();
        delta.as_mut_slice().iter_mut().for_each(|v| *v = softplus(*v));
        let b = xn.matmul(&self.w_b);
        let c = xn.matmul(&self.w_c);
        let rates: Vec<f64> = self.log_rate.as_slice().iter().map(|l| l.exp()).collect();

        let stride = d * ns;
        let mut h = vec![0.0; t_len * stride];
        let mut y = Matrix::zeros(t_len, d);
        for t in 0..t_len {
            let (prev, cur) = h.split_at_mut(t * stride);
            let cur = &mut cur[..stride];
            let prev = if t > 0 { Some(&prev[(t - 1) * stride..]) } else { None };
            for ch in 0..d {
                let dt = delta[(t, ch)];
                let ut = u[(t, ch)];
                let mut acc = self.skip[ch] * ut;
                for n in 0..ns {
                    let a = rates[ch * ns + n];
                    let e = (-a * dt).exp();
                    let k = -(-a * dt).exp_m1() / a;
                    let hp = prev.map_or(0.0, |p| p[ch * ns + n]);
                    let hv = e * hp + k * b[(t, n)] * ut;
                    cur[ch * ns + n] = hv;
                    acc += c[(t, n)] * hv;
                }
                y[(t, ch)] = acc;
            }
        }
        let mut out = y.hadamard(&g).matmul(&self.w_o);
        for t in 0..t_len {
            let row = out.row_mut(t);
            axpy(1.0, &self.b_o, row);
            axpy(1.0, x.row(t), row);
        }
        (out, SsmCache { xn, inv_std, u_pre, u, g, z, d_pre, delta, b, c, h, y })
    }

    pub fn backward(&self, cache: &SsmCache, g_out: &Matrix, norm: NormMode) -> (Matrix, SsmParams) {
        let (t_len, d) = g_out.shape();
        let ns = self.n_state();
        let stride = d * ns;
        let mut grads = SsmParams::zeros(d, ns, self.w_d1.cols());
        grads.b_o = g_out.sum_rows();
        grads.w_o = cache.y.hadamard(&cache.g).t_matmul(g_out);
        let g_q = g_out.matmul_t(&self.w_o);
        let g_y = g_q.hadamard(&cache.g);
        let g_g = g_q.hadamard(&cache.y);

        let rates: Vec<f64> = self.log_rate.as_slice().iter().map(|l| l.exp()).collect();
        let mut g_u = Matrix::zeros(t_len, d);
        let mut g_delta = Matrix::zeros(t_len, d);
        let mut g_b = Matrix::zeros(t_len, ns);
        let mut g_c = Matrix::zeros(t_len, ns);
        let mut g_rate = vec![0.0; stride];
        let mut gh = vec![0.0; stride];
        for t in (0..t_len).rev() {
            let cur = &cache.h[t * stride..(t + 1) * stride];
            for ch in 0..d {
                let gy = g_y[(t, ch)];
                let ut = cache.u[(t, ch)];
                let dt = cache.delta[(t, ch)];
                grads.skip[ch] += gy * ut;
                let mut gu = gy * self.skip[ch];
                let mut gd = 0.0;
                for n in 0..ns {
                    let i = ch * ns + n;
                    let a = rates[i];
                    g_c[(t, n)] += gy * cur[i];
                    let ghv = gh[i] + cache.c[(t, n)] * gy;
                    let e = (-a * dt).exp();
                    let k = -(-a * dt).exp_m1() / a;
                    let hp = if t > 0 { cache.h[(t - 1) * stride + i] } else { 0.0 };
                    let bt = cache.b[(t, n)];
                    let ge = ghv * hp;
                    let gk = ghv * bt * ut;
                    g_b[(t, n)] += ghv * k * ut;
                    gu += ghv * k * bt;
                    gd += -ge * a * e + gk * e;
                    g_rate[i] += -ge * dt * e + gk * (dt * e * a - (1.0 - e)) / (a * a);
                    gh[i] = ghv * e;
                }
                g_u[(t, ch)] = gu;
                g_delta[(t, ch)] = gd;
            }
        }
        for (i, g) in grads.log_rate.as_mut_slice().iter_mut().enumerate() {
            *g = g_rate[i] * rates[i];
        }

        let mut g_dpre = g_delta;
        for (g, &p) in g_dpre.as_mut_slice().iter_mut().zip(cache.d_pre.as_slice()) {
            *g *= sigmoid(p);
        }
        grads.b_delta = g_dpre.sum_rows();
        grads.w_d2 = cache.z.t_matmul(&g_dpre);
        let g_z = g_dpre.matmul_t(&self.w_d2);
        grads.w_d1 = cache.xn.t_matmul(&g_z);
        let mut g_xn = g_z.matmul_t(&self.w_d1);
        grads.w_b = cache.xn.t_matmul(&g_b);
        grads.w_c = cache.xn.t_matmul(&g_c);
        g_xn.add_assign(&g_b.matmul_t(&self.w_b));
        g_xn.add_assign(&g_c.matmul_t(&self.w_c));

        let mut g_ag = Matrix::zeros(t_len, 2 * d);
        for t in 0..t_len {
            let (ga, gg) = g_ag.row_mut(t).split_at_mut(d);
            for ((o, &gu), &up) in ga.iter_mut().zip(g_u.row(t)).zip(cache.u_pre.row(t)) {
                *o = gu * gelu_prime(up);
            }
            gg.copy_from_slice(g_g.row(t));
        }
        grads.w_in = cache.xn.t_matmul(&g_ag);
        grads.b_in = g_ag.sum_rows();
        g_xn.add_assign(&g_ag.matmul_t(&self.w_in));
        let mut g_x = g_out.clone();
        normalize_backward(norm, &cache.xn, &cache.inv_std, &g_xn, &mut g_x);
        (g_x, grads)
    }
}
