use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_power_law, gamma_ratio, DecayFit, Matrix};

/// How feedback weights are produced for the scalar recursion.
#[derive(Clone, Debug, PartialEq)]
pub enum AlphaKind {
    /// `alpha[t, j] = 1/t` for `j < t`.
    Uniform,
    /// Nonnegative strictly lower-triangular weights.
    Explicit(Matrix),
    /// Saturated envelope `alpha[t, j] = c2/t`, the comparison majorant.
    Envelope { c2: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum GammaKind {
    Constant(f64),
    Explicit(Vec<f64>),
    /// Saturated bound `gamma_t = gamma_max`.
    Bound { gamma_max: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingSpec {
    pub alpha: AlphaKind,
    pub gamma: GammaKind,
}

impl RoutingSpec {
    pub fn uniform(gamma: f64) -> Self {
        Self { alpha: AlphaKind::Uniform, gamma: GammaKind::Constant(gamma) }
    }

    pub fn envelope(c2: f64, gamma_max: f64) -> Self {
        Self { alpha: AlphaKind::Envelope { c2 }, gamma: GammaKind::Bound { gamma_max } }
    }

    pub fn explicit(alpha: Matrix, gamma: Vec<f64>) -> Self {
        Self { alpha: AlphaKind::Explicit(alpha), gamma: GammaKind::Explicit(gamma) }
    }

    /// `sup_t |gamma_t|`.
    pub fn gamma_max(&self) -> f64 {
        match &self.gamma {
            GammaKind::Constant(g) => g.abs(),
            GammaKind::Explicit(v) => v.iter().fold(0.0, |m, g| m.max(g.abs())),
            GammaKind::Bound { gamma_max } => *gamma_max,
        }
    }

    /// Smallest `c2` with `alpha[t, j] <= c2/t`.
    pub fn c2(&self) -> f64 {
        match &self.alpha {
            AlphaKind::Uniform => 1.0,
            AlphaKind::Envelope { c2 } => *c2,
            AlphaKind::Explicit(m) => {
                let mut c: f64 = 0.0;
                for t in 1..m.rows() {
                    for j in 0..t {
                        c = c.max(t as f64 * m[(t, j)]);
                    }
                }
                c
            }
        }
    }

    /// `1 - gamma_max * c2`.
    pub fn beta_tail(&self) -> f64 {
        1.0 - self.gamma_max() * self.c2()
    }

    pub fn is_subcritical(&self) -> bool {
        self.gamma_max() * self.c2() < 1.0
    }

    fn validate(&self, t_len: usize) -> Result<()> {
        match &self.alpha {
            AlphaKind::Uniform => {}
            AlphaKind::Envelope { c2 } => {
                if !(*c2 > 0.0 && c2.is_finite()) {
                    return Err(Error::Domain(format!("envelope constant c2 must be positive, got {c2}")));
                }
            }
            AlphaKind::Explicit(m) => {
                if m.rows() < t_len || m.cols() < t_len {
                    return Err(Error::Shape(format!("routing is {:?}, horizon is {t_len}", m.shape())));
                }
                for t in 0..t_len {
                    let row = m.row(t);
                    if row[t..].iter().any(|&v| v != 0.0) || row[..t].iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "routing row {t} must be nonnegative and strictly lower triangular"
                        )));
                    }
                    if row[..t].iter().sum::<f64>() > 1.0 + 1e-12 {
                        return Err(Error::InvalidInput(format!("routing row {t} sums above one")));
                    }
                }
            }
        }
        match &self.gamma {
            GammaKind::Constant(g) if !(g.abs() < 1.0) => {
                Err(Error::Domain(format!("gain must satisfy |gamma| < 1, got {g}")))
            }
            GammaKind::Bound { gamma_max } if !(0.0..1.0).contains(gamma_max) => {
                Err(Error::Domain(format!("gamma_max must lie in [0, 1), got {gamma_max}")))
            }
            GammaKind::Explicit(v) if v.len() < t_len => {
                Err(Error::Shape(format!("{} gains for horizon {t_len}", v.len())))
            }
            GammaKind::Explicit(v) if v.iter().any(|g| !(g.abs() < 1.0)) => {
                Err(Error::Domain("every gain must satisfy |gamma_t| < 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn gamma_at(&self, t: usize) -> f64 {
        match &self.gamma {
            GammaKind::Constant(g) => *g,
            GammaKind::Explicit(v) => v[t],
            GammaKind::Bound { gamma_max } => *gamma_max,
        }
    }
}

/// Response `y_{tau + l}` of the scalar feedback recursion to a unit impulse at `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSeries {
    pub source: usize,
    /// `values[l] = y_{source + l}`, so `values[0] = 1`.
    pub values: Vec<f64>,
    pub beta_tail: f64,
}

impl ImpulseSeries {
    /// Values indexed by lag.
    pub fn by_lag(&self) -> &[f64] {
        &self.values
    }

    pub fn max_lag(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn fit_power_law(&self, window: (usize, usize)) -> Result<DecayFit> {
        fit_power_law(&self.values, window)
    }
}

/// Runs `y_t = gamma_t sum_{j<t} alpha[t, j] y_j` for `t > tau` from `y_tau = 1`
/// up to horizon `t_len` (exclusive).
pub fn impulse_response(spec: &RoutingSpec, tau: usize, t_len: usize) -> Result<ImpulseSeries> {
    if tau >= t_len {
        return Err(Error::InvalidInput(format!("source {tau} must be below horizon {t_len}")));
    }
    spec.validate(t_len)?;
    let n = t_len - tau;
    let mut y = vec![0.0; n];
    y[0] = 1.0;
    match &spec.alpha {
        AlphaKind::Uniform | AlphaKind::Envelope { .. } => {
            let c2 = spec.c2();
            let mut partial = 1.0;
            for l in 1..n {
                let t = tau + l;
                y[l] = spec.gamma_at(t) * c2 / t as f64 * partial;
                partial += y[l];
            }
        }
        AlphaKind::Explicit(m) => {
            for l in 1..n {
                let t = tau + l;
                let row = &m.row(t)[tau..t];
                let acc: f64 = row.iter().zip(&y[..l]).map(|(a, v)| a * v).sum();
                y[l] = spec.gamma_at(t) * acc;
            }
        }
    }
    Ok(ImpulseSeries { source: tau, values: y, beta_tail: spec.beta_tail() })
}

/// `gamma Gamma(tau+1)/Gamma(tau+1+gamma) * Gamma(tau+l+gamma)/Gamma(tau+l+1)`.
pub fn uniform_closed_form(gamma: f64, tau: usize, lag: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if lag == 0 {
        return Err(Error::Domain("lag must be at least 1".into()));
    }
    let tau = tau as f64;
    let t = tau + lag as f64;
    let source = gamma_ratio(tau + 1.0, tau + 1.0 + gamma)?;
    Ok(gamma * source * crate::numerics::log_gamma_ratio(t, gamma)?)
}
