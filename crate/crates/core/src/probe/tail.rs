use serde::{Deserialize, Serialize};

use super::DEFAULT_FD_STEP;
use crate::error::{Error, Result};
use crate::mixer::{block_forward, BlockParams, MixerCache, MixerConfig};
use crate::numerics::{norm2, Matrix};
use crate::table::ProbeRow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheckConfig {
    pub source: usize,
    /// Declared routing envelope `alpha_b[t, j] <= c2 / t`; estimated from the samples when absent.
    pub c2: Option<f64>,
    /// Declared gain bound; estimated from the samples when absent.
    pub gamma_max: Option<f64>,
    pub fd_step: f64,
}

impl Default for TailCheckConfig {
    fn default() -> Self {
        Self { source: 0, c2: None, gamma_max: None, fd_step: DEFAULT_FD_STEP }
    }
}

/// Constants of the block tail envelope. Smoothness constants are maxima over
/// the probed samples at the probed source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    pub c2: f64,
    pub gamma_max: f64,
    pub eta: f64,
    pub beta_tail: f64,
    pub f_bound: f64,
    pub s_bound: f64,
    pub gate_bound: f64,
    pub w_out_norm: f64,
    pub l_f0: f64,
    pub l_f: f64,
    pub l_gamma: f64,
    pub l_alpha0: f64,
    pub l_route: f64,
    pub c_k: f64,
    pub c_beta: f64,
    pub a0: f64,
    pub a1: f64,
    pub c_r: f64,
    /// `||W_out|| G_R C(R)`, the prefactor of the block envelope.
    pub block_constant: f64,
}

impl TailConstants {
    /// Block envelope at lag `l >= 1`: `block_constant * l^{-beta} (1 + ln(1 + l))`.
    pub fn envelope(&self, lag: usize) -> f64 {
        let l = lag as f64;
        self.block_constant * l.powf(-self.beta_tail) * (1.0 + l.ln_1p())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianBlockReport {
    pub constants: TailConstants,
    pub log_factor: bool,
    /// One row per sample and lag, samples in input order.
    pub rows: Vec<ProbeRow>,
    pub violations: Vec<ProbeRow>,
}

struct SampleMeasure {
    c2: f64,
    gamma_max: f64,
    f_bound: f64,
    gate_bound: f64,
    l_f0: f64,
    l_f: f64,
    l_gamma: f64,
    l_alpha0: f64,
    l_route: f64,
    /// `||d y_{tau + l} / d x_tau||` for `l = 1..`.
    norms: Vec<f64>,
}

fn max_row_norm(m: &Matrix) -> f64 {
    (0..m.rows()).map(|t| norm2(m.row(t))).fold(0.0, f64::max)
}

fn observed_regime(cache: &MixerCache) -> (f64, f64) {
    let t_len = cache.len();
    let mut c2: f64 = 0.0;
    for t in 1..t_len {
        let peak = cache.alpha_b.row(t)[..t].iter().copied().fold(0.0, f64::max);
        c2 = c2.max(peak * t as f64);
    }
    let gamma_max = cache.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    (c2, gamma_max)
}

fn measure(params: &BlockParams, config: &MixerConfig, x: &Matrix, tau: usize, h: f64) -> Result<SampleMeasure> {
    let (t_len, d) = x.shape();
    let (_, cache) = block_forward(x, params, config)?;
    let (c2, gamma_max) = observed_regime(&cache);
    let mut jac_y: Vec<Matrix> = (0..t_len).map(|_| Matrix::zeros(d, d)).collect();
    let mut jac_f: Vec<Matrix> = (0..t_len).map(|_| Matrix::zeros(d, d)).collect();
    let mut grad_gamma = vec![0.0; d];
    let mut alpha_sq = Matrix::zeros(t_len, t_len);
    let mut xp = x.clone();
    let scale = 1.0 / (2.0 * h);
    for j in 0..d {
        let orig = x[(tau, j)];
        xp[(tau, j)] = orig + h;
        let (yu, cu) = block_forward(&xp, params, config)?;
        xp[(tau, j)] = orig - h;
        let (yd, cd) = block_forward(&xp, params, config)?;
        xp[(tau, j)] = orig;
        for t in tau..t_len {
            for i in 0..d {
                jac_y[t][(i, j)] = (yu[(t, i)] - yd[(t, i)]) * scale;
                jac_f[t][(i, j)] = (cu.f[(t, i)] - cd.f[(t, i)]) * scale;
            }
            for m in 0..t {
                let dv = (cu.alpha_b[(t, m)] - cd.alpha_b[(t, m)]) * scale;
                alpha_sq[(t, m)] += dv * dv;
            }
        }
        grad_gamma[j] = (cu.gamma[tau] - cd.gamma[tau]) * scale;
    }
    if jac_y.iter().any(|m| !m.is_finite()) {
        return Err(Error::Probe { t: t_len - 1, tau });
    }
    let alpha_mass = |t: usize| -> f64 { alpha_sq.row(t)[..t].iter().map(|v| v.sqrt()).sum() };
    let l_f = (tau + 1..t_len).map(|k| (k as f64 + 1.0) * jac_f[k].spectral_norm()).fold(0.0, f64::max);
    let l_route = (tau + 1..t_len).map(|k| (k as f64 + 1.0) / 2.0 * alpha_mass(k)).fold(0.0, f64::max);
    Ok(SampleMeasure {
        c2,
        gamma_max,
        f_bound: max_row_norm(&cache.f),
        gate_bound: max_row_norm(&cache.g),
        l_f0: jac_f[tau].spectral_norm(),
        l_f,
        l_gamma: norm2(&grad_gamma),
        l_alpha0: alpha_mass(tau),
        l_route,
        norms: (tau + 1..t_len).map(|t| jac_y[t].spectral_norm()).collect(),
    })
}

/// Measures `||d y_{tau+l} / d x_tau||` on every sample by central differences
/// and checks it against the assembled diffuse-routing tail envelope.
pub fn sessa_tail_check(
    params: &BlockParams,
    config: &MixerConfig,
    inputs: &[Matrix],
    cfg: &TailCheckConfig,
) -> Result<JacobianBlockReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("tail check needs at least one sample".into()));
    }
    if !config.feedback {
        return Err(Error::Config("tail check needs a block with a feedback branch".into()));
    }
    let tau = cfg.source;
    if let Some(i) = inputs.iter().position(|x| x.rows() < tau + 2) {
        return Err(Error::InvalidInput(format!("sample {i} too short for source {tau}")));
    }
    let measures = inputs
        .iter()
        .map(|x| measure(params, config, x, tau, cfg.fd_step))
        .collect::<Result<Vec<_>>>()?;

    for (i, m) in measures.iter().enumerate() {
        if let Some(c2) = cfg.c2 {
            if m.c2 > c2 * (1.0 + 1e-12) {
                return Err(Error::Regime { sample: i, detail: format!("max t*alpha_b = {} exceeds c2 = {c2}", m.c2) });
            }
        }
        if let Some(g) = cfg.gamma_max {
            if m.gamma_max > g * (1.0 + 1e-12) {
                return Err(Error::Regime { sample: i, detail: format!("|gamma| reaches {} above {g}", m.gamma_max) });
            }
        }
    }
    let fold = |f: fn(&SampleMeasure) -> f64| measures.iter().map(f).fold(0.0, f64::max);
    let c2 = cfg.c2.unwrap_or_else(|| fold(|m| m.c2));
    let gamma_max = cfg.gamma_max.unwrap_or_else(|| fold(|m| m.gamma_max));
    let eta = gamma_max * c2;
    if !(eta < 1.0 && gamma_max < 1.0) {
        let worst = measures
            .iter()
            .enumerate()
            .max_by(|a, b| (a.1.gamma_max * a.1.c2).total_cmp(&(b.1.gamma_max * b.1.c2)))
            .map_or(0, |(i, _)| i);
        return Err(Error::Regime {
            sample: worst,
            detail: format!("gamma_max * c2 = {eta} is not below 1 (gamma_max {gamma_max}, c2 {c2})"),
        });
    }
    let beta = 1.0 - eta;
    let f_bound = fold(|m| m.f_bound);
    let s_bound = f_bound / (1.0 - gamma_max);
    let l_f0 = fold(|m| m.l_f0);
    let l_f = fold(|m| m.l_f);
    let l_gamma = fold(|m| m.l_gamma);
    let l_alpha0 = fold(|m| m.l_alpha0);
    let l_route = fold(|m| m.l_route);
    let c_k = eta * eta.exp();
    let c_beta = 2f64.powf(beta) * (1.0 + 1.0 / (1.0 - beta));
    let a1 = l_f + 2.0 * gamma_max * s_bound * l_route;
    let a0 = l_f0 + l_gamma * s_bound + gamma_max * s_bound * l_alpha0;
    let c_r = c_k.max(1.0) * (a0 + (1.0 + c_beta) * a1);
    let gate_bound = fold(|m| m.gate_bound);
    let w_out_norm = params.w_out.spectral_norm();
    let constants = TailConstants {
        c2,
        gamma_max,
        eta,
        beta_tail: beta,
        f_bound,
        s_bound,
        gate_bound,
        w_out_norm,
        l_f0,
        l_f,
        l_gamma,
        l_alpha0,
        l_route,
        c_k,
        c_beta,
        a0,
        a1,
        c_r,
        block_constant: w_out_norm * gate_bound * c_r,
    };
    let mut rows = Vec::new();
    for m in &measures {
        for (k, &norm) in m.norms.iter().enumerate() {
            let lag = k + 1;
            let envelope = constants.envelope(lag);
            rows.push(ProbeRow { t: tau + lag, tau, lag, norm, envelope, ok: norm <= envelope });
        }
    }
    let violations = rows.iter().filter(|r| !r.ok).cloned().collect();
    Ok(JacobianBlockReport { constants, log_factor: true, rows, violations })
}
