use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, gelu, gelu_prime, softmax_backward, softmax_in_place, Matrix, Rope};

use super::feedback::{feedback_parts, routing_grad, solve_lower, solve_lower_adjoint};
use super::{BlockGrads, BlockParams, MixerConfig, NormMode};

/// Everything the backward pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct MixerCache {
    pub config: MixerConfig,
    /// Normalized input (a copy of `x` under the identity norm).
    pub xn: Matrix,
    /// Per-row inverse standard deviation; empty under the identity norm.
    pub inv_std: Vec<f64>,
    pub a: Matrix,
    pub g: Matrix,
    pub abar: Matrix,
    /// Forward queries and keys after rotation.
    pub qf: Matrix,
    pub kf: Matrix,
    pub v: Matrix,
    pub alpha_f: Matrix,
    pub qb: Matrix,
    pub kb: Matrix,
    pub alpha_b: Matrix,
    pub gamma: Vec<f64>,
    /// `B[t, j] = gamma_t * alpha_b[t, j]`.
    pub routing: Matrix,
    pub f: Matrix,
    pub s: Matrix,
}

impl MixerCache {
    pub fn len(&self) -> usize {
        self.xn.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.xn.rows() == 0
    }
}

struct ForwardParts {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    alpha: Matrix,
    f: Matrix,
}

fn forward_parts(abar: &Matrix, params: &BlockParams, rope: &Rope) -> ForwardParts {
    let t_len = abar.rows();
    let mut q = abar.matmul(&params.w_qf);
    let mut k = abar.matmul(&params.w_kf);
    for t in 0..t_len {
        rope.rotate_in_place(q.row_mut(t), t as f64);
        rope.rotate_in_place(k.row_mut(t), t as f64);
    }
    let v = abar.matmul(&params.w_v);
    let scale = 1.0 / (params.w_qf.cols() as f64).sqrt();
    let mut alpha = Matrix::zeros(t_len, t_len);
    let mut f = Matrix::zeros(t_len, v.cols());
    for t in 0..t_len {
        let qt = q.row(t);
        let row = &mut alpha.row_mut(t)[..=t];
        for (j, r) in row.iter_mut().enumerate() {
            *r = scale * dot(qt, k.row(j));
        }
        softmax_in_place(row);
        let ft = f.row_mut(t);
        for (j, &w) in row.iter().enumerate() {
            axpy(w, v.row(j), ft);
        }
    }
    ForwardParts { q, k, v, alpha, f }
}

/// Causal RoPE attention over `abar`: `f_t = sum_{j<=t} alpha_f[t, j] v_j`.
pub fn forward_attention(abar: &Matrix, params: &BlockParams, config: &MixerConfig) -> Result<Matrix> {
    config.validate()?;
    if abar.cols() != config.d_model {
        return Err(Error::Shape(format!("input width {} vs d_model {}", abar.cols(), config.d_model)));
    }
    let rope = Rope::new(config.d_k, config.rope_base)?;
    Ok(forward_parts(abar, params, &rope).f)
}

pub(crate) fn normalize(x: &Matrix, norm: NormMode) -> (Matrix, Vec<f64>) {
    match norm {
        NormMode::Identity => (x.clone(), Vec::new()),
        NormMode::LayerNorm { eps } => {
            let d = x.cols() as f64;
            let mut xn = x.clone();
            let mut inv = Vec::with_capacity(x.rows());
            for t in 0..x.rows() {
                let row = xn.row_mut(t);
                let mean = row.iter().sum::<f64>() / d;
                row.iter_mut().for_each(|v| *v -= mean);
                let var = dot(row, row) / d;
                let is = 1.0 / (var + eps).sqrt();
                row.iter_mut().for_each(|v| *v *= is);
                inv.push(is);
            }
            (xn, inv)
        }
    }
}

/// One block: `y = x + ((s ⊙ g) W_out + b_out)` where `s` solves `(I - B) s = f`.
pub fn block_forward(x: &Matrix, params: &BlockParams, config: &MixerConfig) -> Result<(Matrix, MixerCache)> {
    config.validate()?;
    params.validate(config)?;
    if x.cols() != config.d_model {
        return Err(Error::Shape(format!("input width {} vs d_model {}", x.cols(), config.d_model)));
    }
    if x.rows() == 0 || x.rows() > config.t_max {
        return Err(Error::Shape(format!("sequence length {} outside [1, {}]", x.rows(), config.t_max)));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("non-finite block input".into()));
    }
    let rope = Rope::new(config.d_k, config.rope_base)?;
    Ok(forward_unchecked(x, params, config, &rope))
}

pub(crate) fn forward_unchecked(x: &Matrix, params: &BlockParams, config: &MixerConfig, rope: &Rope) -> (Matrix, MixerCache) {
    let t_len = x.rows();
    let d = config.d_model;
    let (xn, inv_std) = normalize(x, config.norm);
    let mut ag = xn.matmul(&params.w_in);
    for t in 0..t_len {
        axpy(1.0, &params.b_in, ag.row_mut(t));
    }
    let a = ag.columns(0, d);
    let g = ag.columns(d, d);
    let mut abar = a.clone();
    abar.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));

    let fw = forward_parts(&abar, params, rope);
    let (qb, kb, alpha_b, gamma, routing, s) = if config.feedback {
        let fb = feedback_parts(&abar, params);
        let mut routing = Matrix::zeros(t_len, t_len);
        for t in 1..t_len {
            let src = fb.alpha.row(t);
            let dst = routing.row_mut(t);
            for j in 0..t {
                dst[j] = fb.gamma[t] * src[j];
            }
        }
        let s = solve_lower(&routing, &fw.f);
        (fb.q, fb.k, fb.alpha, fb.gamma, routing, s)
    } else {
        (
            Matrix::zeros(t_len, 0),
            Matrix::zeros(t_len, 0),
            Matrix::zeros(t_len, t_len),
            vec![0.0; t_len],
            Matrix::zeros(t_len, t_len),
            fw.f.clone(),
        )
    };

    let z = s.hadamard(&g);
    let mut y = z.matmul(&params.w_out);
    for t in 0..t_len {
        let row = y.row_mut(t);
        axpy(1.0, &params.b_out, row);
        axpy(1.0, x.row(t), row);
    }
    let cache = MixerCache {
        config: config.clone(),
        xn,
        inv_std,
        a,
        g,
        abar,
        qf: fw.q,
        kf: fw.k,
        v: fw.v,
        alpha_f: fw.alpha,
        qb,
        kb,
        alpha_b,
        gamma,
        routing,
        f: fw.f,
        s,
    };
    (y, cache)
}

/// Reverse-mode pass: returns `dL/dx` and the parameter gradients given `dL/dy`.
pub fn block_backward(cache: &MixerCache, params: &BlockParams, g_y: &Matrix) -> Result<(Matrix, BlockGrads)> {
    let cfg = &cache.config;
    if g_y.shape() != cache.xn.shape() {
        return Err(Error::Cache(format!(
            "upstream gradient {:?} does not match cached sequence {:?}",
            g_y.shape(),
            cache.xn.shape()
        )));
    }
    if params.validate(cfg).is_err() {
        return Err(Error::Cache("parameters do not match the configuration that produced the cache".into()));
    }
    let rope = Rope::new(cfg.d_k, cfg.rope_base)?;
    Ok(backward_unchecked(cache, params, g_y, &rope))
}

/// Softmax backward on the first `width(t)` entries of each row, in place:
/// `g` holds `dL/dalpha` on entry and `dL/dlogit` on exit.
fn softmax_rows_backward(alpha: &Matrix, g: &mut Matrix, strict: bool) {
    let mut tmp = vec![0.0; alpha.cols()];
    for t in 0..alpha.rows() {
        let w = if strict { t } else { t + 1 };
        if w == 0 {
            continue;
        }
        let p = &alpha.row(t)[..w];
        let gr = &mut g.row_mut(t)[..w];
        softmax_backward(p, gr, &mut tmp[..w]);
        gr.copy_from_slice(&tmp[..w]);
    }
}

pub(crate) fn backward_unchecked(cache: &MixerCache, params: &BlockParams, g_y: &Matrix, rope: &Rope) -> (Matrix, BlockGrads) {
    let cfg = &cache.config;
    let t_len = cache.len();
    let d = cfg.d_model;
    let mut grads = BlockParams::zeros(cfg);

    let z = cache.s.hadamard(&cache.g);
    grads.b_out = g_y.sum_rows();
    grads.w_out = z.t_matmul(g_y);
    let g_z = g_y.matmul_t(&params.w_out);
    let g_s = g_z.hadamard(&cache.g);
    let g_g = g_z.hadamard(&cache.s);

    let mut g_abar = Matrix::zeros(t_len, d);
    let g_f = if cfg.feedback {
        let g_f = solve_lower_adjoint(&cache.routing, &g_s);
        let mut g_route = routing_grad(&g_f, &cache.s);
        let mut g_u = vec![0.0; t_len];
        for t in 1..t_len {
            let gam = cache.gamma[t];
            let row = &mut g_route.row_mut(t)[..t];
            let g_gamma = dot(row, &cache.alpha_b.row(t)[..t]);
            g_u[t] = g_gamma * (1.0 - gam * gam);
            row.iter_mut().for_each(|v| *v *= gam);
        }
        g_u[0] = 0.0;
        softmax_rows_backward(&cache.alpha_b, &mut g_route, true);
        let scale = 1.0 / (cfg.d_k as f64).sqrt();
        g_route.scale(scale);
        let g_qb = g_route.matmul(&cache.kb);
        let g_kb = g_route.t_matmul(&cache.qb);
        grads.w_qb = cache.abar.t_matmul(&g_qb);
        grads.w_kb = cache.abar.t_matmul(&g_kb);
        g_abar.add_assign(&g_qb.matmul_t(&params.w_qb));
        g_abar.add_assign(&g_kb.matmul_t(&params.w_kb));
        grads.w_gamma = cache.abar.t_mul_vec(&g_u);
        grads.b_gamma = g_u.iter().sum();
        for (t, &gu) in g_u.iter().enumerate() {
            if gu != 0.0 {
                axpy(gu, &params.w_gamma, g_abar.row_mut(t));
            }
        }
        g_f
    } else {
        g_s
    };

    let mut g_att = Matrix::zeros(t_len, t_len);
    for t in 0..t_len {
        let gf = g_f.row(t);
        let row = &mut g_att.row_mut(t)[..=t];
        for (j, r) in row.iter_mut().enumerate() {
            *r = dot(gf, cache.v.row(j));
        }
    }
    let g_v = cache.alpha_f.t_matmul(&g_f);
    softmax_rows_backward(&cache.alpha_f, &mut g_att, false);
    g_att.scale(1.0 / (cfg.d_k as f64).sqrt());
    let mut g_qf = g_att.matmul(&cache.kf);
    let mut g_kf = g_att.t_matmul(&cache.qf);
    for t in 0..t_len {
        rope.unrotate_in_place(g_qf.row_mut(t), t as f64);
        rope.unrotate_in_place(g_kf.row_mut(t), t as f64);
    }
    grads.w_qf = cache.abar.t_matmul(&g_qf);
    grads.w_kf = cache.abar.t_matmul(&g_kf);
    grads.w_v = cache.abar.t_matmul(&g_v);
    g_abar.add_assign(&g_qf.matmul_t(&params.w_qf));
    g_abar.add_assign(&g_kf.matmul_t(&params.w_kf));
    g_abar.add_assign(&g_v.matmul_t(&params.w_v));

    let mut g_ag = Matrix::zeros(t_len, 2 * d);
    for t in 0..t_len {
        let out = g_ag.row_mut(t);
        let (ga, gg) = out.split_at_mut(d);
        for ((o, &gb), &a) in ga.iter_mut().zip(g_abar.row(t)).zip(cache.a.row(t)) {
            *o = gb * gelu_prime(a);
        }
        gg.copy_from_slice(g_g.row(t));
    }
    grads.w_in = cache.xn.t_matmul(&g_ag);
    grads.b_in = g_ag.sum_rows();
    let g_xn = g_ag.matmul_t(&params.w_in);

    let mut g_x = g_y.clone();
    normalize_backward(cfg.norm, &cache.xn, &cache.inv_std, &g_xn, &mut g_x);
    (g_x, grads)
}

/// Adds `dL/dx` to `g_x` given `dL/dxn` for `xn = normalize(x)`.
pub(crate) fn normalize_backward(norm: NormMode, xn: &Matrix, inv_std: &[f64], g_xn: &Matrix, g_x: &mut Matrix) {
    match norm {
        NormMode::Identity => g_x.add_assign(g_xn),
        NormMode::LayerNorm { .. } => {
            let dn = xn.cols() as f64;
            for t in 0..xn.rows() {
                let gn = g_xn.row(t);
                let xr = xn.row(t);
                let mean_g = gn.iter().sum::<f64>() / dn;
                let mean_gx = dot(gn, xr) / dn;
                let is = inv_std[t];
                for ((o, &gv), &xv) in g_x.row_mut(t).iter_mut().zip(gn).zip(xr) {
                    *o += is * (gv - mean_g - xv * mean_gx);
                }
            }
        }
    }
}
