use serde::{Deserialize, Serialize};

use super::impulse::{impulse_response, ImpulseSeries, RoutingSpec};
use crate::error::{Error, Result};
use crate::numerics::{default_window, fit_power_law, gamma_ratio};
use crate::table::EnvelopeRow;

/// `(1 - beta) e^{1 - beta}`.
pub fn poly_decay_constant(beta: f64) -> f64 {
    let eta = 1.0 - beta;
    eta * eta.exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyDecayReport {
    pub beta: f64,
    pub c_used: f64,
    /// `max_l |y_l| l^beta / C`; at most one when the bound holds.
    pub max_violation: f64,
    /// `max_l |y_l| l^beta`, the sharpest constant for this series.
    pub empirical_constant: f64,
    pub rows: Vec<EnvelopeRow>,
}

/// Checks `|y_{tau+l}| <= C l^{-beta}` for every lag `l >= 1`.
pub fn poly_decay_check(series: &ImpulseSeries) -> Result<PolyDecayReport> {
    let beta = series.beta_tail;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!(
            "tail exponent {beta} is outside (0, 1]: the routing is not subcritical"
        )));
    }
    let c = poly_decay_constant(beta);
    let mut rows = Vec::with_capacity(series.values.len());
    let mut empirical: f64 = 0.0;
    let mut first_bad = None;
    for (l, &y) in series.values.iter().enumerate().skip(1) {
        let lf = l as f64;
        let envelope = c * lf.powf(-beta);
        empirical = empirical.max(y.abs() * lf.powf(beta));
        let violated = y.abs() > envelope * (1.0 + 1e-12) + 1e-300;
        if violated && first_bad.is_none() {
            first_bad = Some((l, y, envelope));
        }
        rows.push(EnvelopeRow { lag: l, value: y, envelope, violated });
    }
    if let Some((lag, y, env)) = first_bad {
        return Err(Error::CheckFailed {
            lag,
            detail: format!("|y| = {y:e} exceeds C l^-beta = {env:e} (beta = {beta}, C = {c})"),
        });
    }
    let max_violation = if c > 0.0 { empirical / c } else { 0.0 };
    Ok(PolyDecayReport { beta, c_used: c, max_violation, empirical_constant: empirical, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedReport {
    pub gamma: f64,
    pub beta: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    /// Fitted power-law exponent of each source row, indexed by `tau`.
    pub fitted_exponents: Vec<f64>,
    pub fit_window: (usize, usize),
}

/// Verifies `c- l^{-beta} <= y_{tau+l} <= c+ l^{-beta}` for `0 <= tau <= tau_max`,
/// `1 <= l <= l_max` under uniform routing with constant gain.
///
/// `c+ = max_tau a_tau` and `c- = min_tau a_tau (tau_max + 2)^{-beta}` where
/// `a_tau = gamma Gamma(tau+1)/Gamma(tau+1+gamma)`.
pub fn two_sided_tail_check(gamma: f64, tau_max: usize, l_max: usize) -> Result<TwoSidedReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if l_max < 1 {
        return Err(Error::Domain("l_max must be at least 1".into()));
    }
    let beta = 1.0 - gamma;
    let prefactors: Vec<f64> = (0..=tau_max)
        .map(|tau| Ok(gamma * gamma_ratio(tau as f64 + 1.0, tau as f64 + 1.0 + gamma)?))
        .collect::<Result<_>>()?;
    let m = prefactors.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_plus = prefactors.iter().cloned().fold(0.0, f64::max);
    let c_minus = m * (tau_max as f64 + 2.0).powf(-beta);
    let window = if l_max >= 64 + 7 { (64, l_max) } else { default_window(l_max) };
    let mut fitted = Vec::with_capacity(tau_max + 1);
    let spec = RoutingSpec::uniform(gamma);
    for tau in 0..=tau_max {
        let series = impulse_response(&spec, tau, tau + l_max + 1)?;
        for (l, &y) in series.values.iter().enumerate().skip(1) {
            let p = (l as f64).powf(-beta);
            if y > c_plus * p * (1.0 + 1e-12) || y < c_minus * p * (1.0 - 1e-12) {
                return Err(Error::CheckFailed {
                    lag: l,
                    detail: format!(
                        "source {tau}: y = {y:e} outside [{:e}, {:e}]",
                        c_minus * p,
                        c_plus * p
                    ),
                });
            }
        }
        if window.1 - window.0 + 1 >= crate::numerics::MIN_FIT_LAGS {
            fitted.push(fit_power_law(&series.values, window)?.exponent);
        }
    }
    Ok(TwoSidedReport { gamma, beta, c_minus, c_plus, fitted_exponents: fitted, fit_window: window })
}
