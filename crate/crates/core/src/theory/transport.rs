use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{default_window, fit_power_law, Matrix};

/// Kernel-level transport stack: a diagonal source selector followed by `k`
/// macro layers `T(i, j) = d 1[i = j] + a (i+1)^{-beta} 1[j < i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub k: usize,
    pub beta: f64,
    pub source: usize,
    pub horizon: usize,
    /// Selector gain at the source.
    pub selector_gain: f64,
    /// Off-target suppression is `c0 / (H + 1)`.
    pub c0: f64,
    pub diag: f64,
    pub jump: f64,
}

impl TransportConfig {
    pub fn new(k: usize, beta: f64, source: usize, horizon: usize) -> Self {
        Self { k, beta, source, horizon, selector_gain: 1.0, c0: 0.01, diag: 1.0, jump: 1.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.c0 / (self.horizon as f64 + 1.0)
    }

    /// `nu_k(beta) = k (1 - beta) - 1`.
    pub fn nu(&self) -> f64 {
        self.k as f64 * (1.0 - self.beta) - 1.0
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.beta > 0.0 && self.beta < 1.0) || self.horizon < self.k {
            return Err(Error::Domain(format!(
                "need k >= 1, beta in (0, 1), H >= k; got k={}, beta={}, H={}",
                self.k, self.beta, self.horizon
            )));
        }
        if !(0.5..=2.0).contains(&self.selector_gain) || !(self.diag >= 1.0) || !(self.jump > 0.0) || !(self.c0 > 0.0) {
            return Err(Error::Domain("selector gain must lie in [1/2, 2], diag >= 1, jump > 0, c0 > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportReport {
    pub k: usize,
    pub beta: f64,
    pub nu: f64,
    pub fitted_nu: f64,
    pub fit_window: (usize, usize),
    pub c_minus: f64,
    pub margin_ok: bool,
    pub first_failing_lag: Option<usize>,
    /// `signal[l]` is the composed kernel at `(source + l, source)`.
    pub signal: Vec<f64>,
    /// `margin[l]` subtracts the absolute competitor mass from the signal.
    pub margin: Vec<f64>,
}

/// Composes the stack exactly, fits the exponent of the source profile over
/// lags and checks the selective margin `M_l >= c- (1 + l)^nu` for `1 <= l <= H`.
///
/// `c-` is half the smallest ratio `P_l / (1 + l)^nu` of the suppression-free
/// profile `P`, so the check asserts the competitor mass never consumes more
/// than half of the balanced-path signal.
pub fn transport_exponent_check(cfg: &TransportConfig) -> Result<TransportReport> {
    cfg.validate()?;
    let t_len = cfg.source + cfg.horizon + 1;
    let macro_layer = Matrix::from_fn(t_len, t_len, |i, j| {
        if i == j {
            cfg.diag
        } else if j < i {
            cfg.jump * (i as f64 + 1.0).powf(-cfg.beta)
        } else {
            0.0
        }
    });
    let mut stack = Matrix::identity(t_len);
    for _ in 0..cfg.k {
        stack = macro_layer.matmul(&stack);
    }
    let eps = cfg.epsilon();
    let nu = cfg.nu();
    let mut signal = vec![0.0; cfg.horizon + 1];
    let mut margin = vec![0.0; cfg.horizon + 1];
    for l in 0..=cfg.horizon {
        let t = cfg.source + l;
        let row = stack.row(t);
        signal[l] = cfg.selector_gain * row[cfg.source];
        let competitors: f64 = (0..t).filter(|&tau| tau != cfg.source).map(|tau| (eps * row[tau]).abs()).sum();
        margin[l] = signal[l] - competitors;
    }
    let c_minus = 0.5
        * (1..=cfg.horizon)
            .map(|l| signal[l] / (1.0 + l as f64).powf(nu))
            .fold(f64::INFINITY, f64::min);
    let first_failing_lag = (1..=cfg.horizon).find(|&l| margin[l] < c_minus * (1.0 + l as f64).powf(nu));
    let window = default_window(cfg.horizon);
    let fitted_nu = fit_power_law(&signal, window)?.exponent;
    Ok(TransportReport {
        k: cfg.k,
        beta: cfg.beta,
        nu,
        fitted_nu,
        fit_window: window,
        c_minus,
        margin_ok: first_failing_lag.is_none(),
        first_failing_lag,
        signal,
        margin,
    })
}
