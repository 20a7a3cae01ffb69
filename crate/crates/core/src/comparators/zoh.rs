use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_exponential, DecayFit, Matrix};

/// Diagonal ZOH channel with a fixed step-size series.
///
/// Mode `n` evolves as `h = e^{-a_n dt} h + (1 - e^{-a_n dt}) / a_n * b_n u_t`
/// and is read out with weight `c_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZohChannel {
    pub rates: Vec<f64>,
    pub delta: Vec<f64>,
    pub input_gain: Vec<f64>,
    pub readout: Vec<f64>,
}

impl ZohChannel {
    pub fn new(rates: Vec<f64>, delta: Vec<f64>, input_gain: Vec<f64>, readout: Vec<f64>) -> Result<Self> {
        let ch = Self { rates, delta, input_gain, readout };
        ch.validate()?;
        Ok(ch)
    }

    /// Single mode with unit input gain and readout.
    pub fn scalar(rate: f64, delta: Vec<f64>) -> Result<Self> {
        Self::new(vec![rate], delta, vec![1.0], vec![1.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Domain("channel needs at least one mode".into()));
        }
        if let Some(a) = self.rates.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!("decay rate {a} must be positive")));
        }
        if let Some(t) = self.delta.iter().position(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::Domain(format!("step size at t={t} is {}, must be >= 0", self.delta[t])));
        }
        let n = self.rates.len();
        if self.input_gain.len() != n || self.readout.len() != n {
            return Err(Error::Shape(format!(
                "{n} modes but {} input gains and {} readouts",
                self.input_gain.len(),
                self.readout.len()
            )));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.rates.len()
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn lambda_min(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_{r = tau+1}^{t} delta_r`.
    pub fn accumulated_time(&self, tau: usize, t: usize) -> f64 {
        self.delta[tau + 1..=t].iter().sum()
    }

    /// Operator norm of the diagonal transition product from `tau` to `t`.
    pub fn transition_factor(&self, tau: usize, t: usize) -> f64 {
        let s = self.accumulated_time(tau, t);
        (-self.lambda_min() * s).exp()
    }
}

/// Runs the recurrence from `h_{-1} = 0`; returns the `T x N` state trajectory.
pub fn zoh_simulate(ch: &ZohChannel, inputs: &[f64]) -> Result<Matrix> {
    ch.validate()?;
    if inputs.len() != ch.len() {
        return Err(Error::Shape(format!("{} inputs for {} steps", inputs.len(), ch.len())));
    }
    let n = ch.modes();
    let mut h = Matrix::zeros(inputs.len(), n);
    let mut prev = vec![0.0; n];
    for (t, &u) in inputs.iter().enumerate() {
        for m in 0..n {
            let a = ch.rates[m];
            let decay = (-a * ch.delta[t]).exp();
            prev[m] = decay * prev[m] + (-(a * ch.delta[t])).exp_m1() / -a * ch.input_gain[m] * u;
        }
        h.row_mut(t).copy_from_slice(&prev);
    }
    Ok(h)
}

/// `|C (prod_{r=tau+1}^{t} A_r) Bbar_tau|` for the fixed channel; at `t = tau`
/// the product is empty.
pub fn mamba_impulse_jacobian(ch: &ZohChannel, tau: usize, t: usize) -> Result<f64> {
    ch.validate()?;
    if tau > t || t >= ch.len() {
        return Err(Error::Domain(format!("need tau <= t < {}, got tau={tau}, t={t}", ch.len())));
    }
    let s = ch.accumulated_time(tau, t);
    let mut total = 0.0;
    for m in 0..ch.modes() {
        let a = ch.rates[m];
        let inject = -(-(a * ch.delta[tau])).exp_m1() / a * ch.input_gain[m];
        total += ch.readout[m] * (-a * s).exp() * inject;
    }
    Ok(total.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezeReport {
    pub source: usize,
    pub lambda: f64,
    /// Largest `c` with `sum delta_r >= c (t - tau)` over every pair in the series.
    pub c_delta: f64,
    pub predicted_rate: f64,
    pub fit: DecayFit,
    /// `J[l]` for `l = 0..T - source`.
    pub series: Vec<f64>,
    pub bound_ok: bool,
}

/// Measures the decay of `J[source + l, source]` and compares it with the
/// failed-freeze rate `-lambda c_delta`.
pub fn freeze_rate_check(ch: &ZohChannel, source: usize, window: (usize, usize)) -> Result<FreezeReport> {
    ch.validate()?;
    let t_len = ch.len();
    if source >= t_len {
        return Err(Error::Domain(format!("source {source} beyond series of {t_len} steps")));
    }
    let mut prefix = vec![0.0; t_len + 1];
    for (t, d) in ch.delta.iter().enumerate() {
        prefix[t + 1] = prefix[t] + d;
    }
    let mut c_delta = f64::INFINITY;
    for tau in 0..t_len {
        for t in tau + 1..t_len {
            c_delta = c_delta.min((prefix[t + 1] - prefix[tau + 1]) / (t - tau) as f64);
        }
    }
    let lambda = ch.lambda_min();
    let series = (source..t_len)
        .map(|t| mamba_impulse_jacobian(ch, source, t))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_exponential(&series, window)?;
    let gain = ch.readout.iter().zip(&ch.input_gain).map(|(c, b)| (c * b).abs()).sum::<f64>() / lambda;
    let bound_ok = series.iter().enumerate().all(|(l, j)| {
        *j <= gain * (-lambda * c_delta * l as f64).exp() * (1.0 + 1e-12)
    });
    Ok(FreezeReport { source, lambda, c_delta, predicted_rate: -lambda * c_delta, fit, series, bound_ok })
}
