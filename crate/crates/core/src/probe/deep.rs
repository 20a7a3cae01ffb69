use serde::{Deserialize, Serialize};

use super::{operator_norms, source_sweep};
use crate::error::{Error, Result};
use crate::mixer::{block_forward, BlockParams, MixerConfig};
use crate::numerics::{default_window, fit_power_law, DecayFit, Matrix};
use crate::theory::{deep_path_sum_bound, KernelKind, PathLayer};

pub const MAX_STACK_DEPTH: usize = 4;
const MAX_STACK_LEN: usize = 256;

/// Empirical one-layer envelope: `d` bounds the same-token Jacobian and
/// `kernel` bounds every cross-token block measured on this input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEnvelope {
    pub d: f64,
    pub kernel: KernelKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepTailReport {
    pub source: usize,
    pub lags: Vec<usize>,
    /// Composite `||d h^N_{tau+l} / d x_tau||` per lag.
    pub norms: Vec<f64>,
    /// Path-sum bound from the per-layer envelopes, per lag.
    pub bounds: Vec<f64>,
    pub layers: Vec<LayerEnvelope>,
    pub fit: Option<DecayFit>,
    pub ok: bool,
}

/// Hidden states `[x, h^1, ..., h^N]` of a block stack.
pub fn stack_forward(layers: &[(BlockParams, MixerConfig)], x: &Matrix) -> Result<Vec<Matrix>> {
    let mut hs = vec![x.clone()];
    for (p, c) in layers {
        let next = block_forward(hs.last().expect("non-empty"), p, c)?.0;
        hs.push(next);
    }
    Ok(hs)
}

fn layer_envelope(params: &BlockParams, config: &MixerConfig, input: &Matrix, from: usize, h: f64) -> Result<LayerEnvelope> {
    let t_len = input.rows();
    let eval = |x: &Matrix| block_forward(x, params, config).map(|r| r.0);
    let (_, cache) = block_forward(input, params, config)?;
    let kernel_shape = if config.feedback {
        let mut c2: f64 = 0.0;
        for t in 1..t_len {
            let peak = cache.alpha_b.row(t)[..t].iter().copied().fold(0.0, f64::max);
            c2 = c2.max(peak * t as f64);
        }
        let gamma_max = cache.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        KernelKind::Heavy { a: 1.0, beta: (1.0 - gamma_max * c2).max(0.0) }
    } else {
        KernelKind::Harmonic { a: 1.0 }
    };
    let mut d: f64 = 0.0;
    let mut a: f64 = 0.0;
    for j in from..t_len {
        let norms = operator_norms(&source_sweep(eval, input, j, h)?);
        d = d.max(norms[j]);
        for (t, n) in norms.iter().enumerate().skip(j + 1) {
            a = a.max(n / kernel_shape.eval(t, j));
        }
    }
    let kernel = match kernel_shape {
        KernelKind::Heavy { beta, .. } => KernelKind::Heavy { a, beta },
        _ => KernelKind::Harmonic { a },
    };
    Ok(LayerEnvelope { d, kernel })
}

/// Measures composite Jacobians of a stack from `source` and compares them
/// with the deep path-sum bound built from per-layer empirical envelopes.
pub fn deep_stack_tail(
    layers: &[(BlockParams, MixerConfig)],
    x: &Matrix,
    source: usize,
    fd_step: f64,
) -> Result<DeepTailReport> {
    if layers.is_empty() || layers.len() > MAX_STACK_DEPTH {
        return Err(Error::InvalidInput(format!(
            "stack depth must be 1..={MAX_STACK_DEPTH}, got {}",
            layers.len()
        )));
    }
    let t_len = x.rows();
    if t_len > MAX_STACK_LEN || source + 1 >= t_len {
        return Err(Error::InvalidInput(format!(
            "need source + 1 < T <= {MAX_STACK_LEN}, got source {source}, T {t_len}"
        )));
    }
    let hs = stack_forward(layers, x)?;
    let eval = |x: &Matrix| stack_forward(layers, x).map(|mut h| h.pop().expect("non-empty"));
    let composite = operator_norms(&source_sweep(eval, x, source, fd_step)?);
    let envelopes = layers
        .iter()
        .zip(&hs)
        .map(|((p, c), input)| layer_envelope(p, c, input, source, fd_step))
        .collect::<Result<Vec<_>>>()?;
    let path: Vec<PathLayer> =
        envelopes.iter().map(|e| PathLayer { d: e.d, lambda: 1.0, kernel: e.kernel }).collect();
    let lags: Vec<usize> = (1..t_len - source).collect();
    let norms: Vec<f64> = lags.iter().map(|l| composite[source + l]).collect();
    let bounds = lags
        .iter()
        .map(|l| deep_path_sum_bound(&path, source + l, source).map(|r| r.bound))
        .collect::<Result<Vec<_>>>()?;
    let ok = norms.iter().zip(&bounds).all(|(n, b)| *n <= b * (1.0 + 1e-6) + 1e-9);
    let by_lag: Vec<f64> = composite[source..].to_vec();
    let fit = fit_power_law(&by_lag, default_window(by_lag.len() - 1)).ok();
    Ok(DeepTailReport { source, lags, norms, bounds, layers: envelopes, fit, ok })
}
