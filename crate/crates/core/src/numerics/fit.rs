//! Least-squares decay fits on a lag-indexed series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_LAGS: usize = 8;

/// Result of a log-log (power law) or semi-log (exponential) fit.
///
/// For a power law `exponent` is the slope of `ln value` against `ln lag`; for
/// an exponential it is the slope against `lag` itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub max_residual: f64,
}

/// Default fit window: from the geometric midpoint of `[1, max_lag]` up to `max_lag`.
pub fn default_window(max_lag: usize) -> (usize, usize) {
    let lo = ((max_lag as f64).sqrt().ceil() as usize).max(1);
    (lo.min(max_lag), max_lag)
}

fn check_window(values_len: usize, window: (usize, usize)) -> Result<()> {
    let (lo, hi) = window;
    if lo == 0 || hi < lo {
        return Err(Error::FitDomain(format!("invalid lag window [{lo}, {hi}]")));
    }
    if hi >= values_len {
        return Err(Error::FitDomain(format!("window end {hi} beyond series of {values_len} lags")));
    }
    if hi - lo + 1 < MIN_FIT_LAGS {
        return Err(Error::FitDomain(format!(
            "window [{lo}, {hi}] has fewer than {MIN_FIT_LAGS} lags"
        )));
    }
    Ok(())
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, intercept, max_res)
}

fn log_values(values: &[f64], window: (usize, usize)) -> Result<Vec<f64>> {
    check_window(values.len(), window)?;
    (window.0..=window.1)
        .map(|l| {
            let v = values[l];
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::FitDomain(format!("non-positive value {v} at lag {l}")))
            }
        })
        .collect()
}

/// Fits `ln values[l] = intercept + exponent * ln l` over `window` (inclusive).
/// `values` is indexed by lag.
pub fn fit_power_law(values: &[f64], window: (usize, usize)) -> Result<DecayFit> {
    let ys = log_values(values, window)?;
    let xs: Vec<f64> = (window.0..=window.1).map(|l| (l as f64).ln()).collect();
    let (exponent, intercept, max_residual) = ols(&xs, &ys);
    Ok(DecayFit { exponent, intercept, window, max_residual })
}

/// Fits `ln values[l] = intercept + exponent * l` over `window` (inclusive).
pub fn fit_exponential(values: &[f64], window: (usize, usize)) -> Result<DecayFit> {
    let ys = log_values(values, window)?;
    let xs: Vec<f64> = (window.0..=window.1).map(|l| l as f64).collect();
    let (exponent, intercept, max_residual) = ols(&xs, &ys);
    Ok(DecayFit { exponent, intercept, window, max_residual })
}
