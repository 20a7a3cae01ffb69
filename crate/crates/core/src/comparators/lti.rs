use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_exponential, DecayFit, Matrix};

/// `h_t = A h_{t-1} + B u_t`, `y_t = C h_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    spectral_radius: f64,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || b.rows() != n || c.cols() != n {
            return Err(Error::Shape(format!(
                "A is {:?}, B is {:?}, C is {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidInput("system matrices must be finite".into()));
        }
        let spectral_radius = DMatrix::from_row_slice(n, n, a.as_slice())
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        Ok(Self { a, b, c, spectral_radius })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiResponse {
    /// `norms[l] = ||C A^l B||_2`.
    pub norms: Vec<f64>,
    pub spectral_radius: f64,
    /// `None` when the response vanishes inside the window.
    pub fit: Option<DecayFit>,
    pub warning: Option<String>,
}

/// Exact impulse-response norms up to `max_lag`, with an exponential fit over
/// `window` (default window policy when `None`).
pub fn lti_impulse_response(sys: &LtiSystem, max_lag: usize, window: Option<(usize, usize)>) -> Result<LtiResponse> {
    let mut norms = Vec::with_capacity(max_lag + 1);
    let mut power_b = sys.b.clone();
    for l in 0..=max_lag {
        if l > 0 {
            power_b = sys.a.matmul(&power_b);
        }
        norms.push(sys.c.matmul(&power_b).spectral_norm());
    }
    let window = window.unwrap_or_else(|| crate::numerics::default_window(max_lag));
    let fit = match fit_exponential(&norms, window) {
        Ok(f) => Some(f),
        Err(Error::FitDomain(_)) if norms[window.0..=window.1.min(max_lag)].iter().any(|v| *v <= 0.0) => None,
        Err(e) => return Err(e),
    };
    let warning = (sys.spectral_radius >= 1.0)
        .then(|| format!("spectral radius {} >= 1: no decay guarantee", sys.spectral_radius));
    Ok(LtiResponse { norms, spectral_radius: sys.spectral_radius, fit, warning })
}
