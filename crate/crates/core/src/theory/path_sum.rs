use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_PATH_LAYERS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `a / (t + 1)`.
    Harmonic { a: f64 },
    /// `a e^{-c (t - tau)}`.
    Exp { a: f64, c: f64 },
    /// `a (t - tau)^{-beta} (1 + log(1 + t - tau))`.
    Heavy { a: f64, beta: f64 },
}

impl KernelKind {
    pub fn eval(&self, t: usize, tau: usize) -> f64 {
        if tau >= t {
            return 0.0;
        }
        let lag = (t - tau) as f64;
        match *self {
            KernelKind::Harmonic { a } => a / (t as f64 + 1.0),
            KernelKind::Exp { a, c } => a * (-c * lag).exp(),
            KernelKind::Heavy { a, beta } => a * lag.powf(-beta) * (1.0 + lag.ln_1p()),
        }
    }
}

/// One-block envelope `d 1[t = tau] + lambda K(t, tau) 1[tau < t]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLayer {
    pub d: f64,
    pub lambda: f64,
    pub kernel: KernelKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSumReport {
    /// Value of the layered product `(D_N + G_N) ... (D_1 + G_1)` at `(t, tau)`.
    pub bound: f64,
    /// For all-harmonic stacks, the nested-harmonic majorant of the same sum.
    pub nested_harmonic: Option<f64>,
}

/// `H_t = sum_{m=1}^t 1/m`.
pub fn harmonic_number(t: usize) -> f64 {
    (1..=t).map(|m| 1.0 / m as f64).sum()
}

/// Deep end-to-end path-sum bound, evaluated by pushing the source impulse
/// through the layers one at a time.
pub fn deep_path_sum_bound(layers: &[PathLayer], t: usize, tau: usize) -> Result<PathSumReport> {
    if layers.is_empty() || layers.len() > MAX_PATH_LAYERS {
        return Err(Error::InvalidInput(format!(
            "path sums need between 1 and {MAX_PATH_LAYERS} layers, got {}",
            layers.len()
        )));
    }
    if t <= tau {
        return Err(Error::InvalidInput(format!("need t > tau, got t={t}, tau={tau}")));
    }
    for l in layers {
        if !(l.d >= 0.0 && l.lambda >= 0.0) {
            return Err(Error::Domain("layer constants must be nonnegative".into()));
        }
    }
    let n = t - tau + 1;
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    for layer in layers {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = layer.d * v[i];
            for j in 0..i {
                if v[j] != 0.0 {
                    acc += layer.lambda * layer.kernel.eval(tau + i, tau + j) * v[j];
                }
            }
            next[i] = acc;
        }
        v = next;
    }
    let nested_harmonic = nested_harmonic_bound(layers, t);
    Ok(PathSumReport { bound: v[n - 1], nested_harmonic })
}

/// Sum over nonempty layer subsets `S` of `prod_{m not in S} d_m prod_{m in S} lambda_m a_m`
/// times `H_t^{|S|-1} / ((|S|-1)! (t+1))`.
fn nested_harmonic_bound(layers: &[PathLayer], t: usize) -> Option<f64> {
    let gains: Vec<f64> = layers
        .iter()
        .map(|l| match l.kernel {
            KernelKind::Harmonic { a } => Some(l.lambda * a),
            _ => None,
        })
        .collect::<Option<_>>()?;
    let h = harmonic_number(t);
    let n = layers.len();
    let mut total = 0.0;
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as i32;
        let mut w = 1.0;
        for (m, layer) in layers.iter().enumerate() {
            w *= if mask & (1 << m) != 0 { gains[m] } else { layer.d };
        }
        let fact: f64 = (1..k).map(|i| i as f64).product();
        total += w * h.powi(k - 1) / fact / (t as f64 + 1.0);
    }
    Some(total)
}
