use crate::error::{Error, Result};
use crate::numerics::Matrix;

const ROW_SUM_TOL: f64 = 1e-12;

/// Rows `alpha[t, 0..=t] = 1 / (t + 1)`.
pub fn uniform_causal_routing(t_len: usize) -> Matrix {
    Matrix::from_fn(t_len, t_len, |t, j| if j <= t { 1.0 / (t as f64 + 1.0) } else { 0.0 })
}

/// Per-pair operator norms of the fixed-routing value Jacobian `alpha[t, tau] I`.
///
/// With `logit_spread = Some(d)` every causal entry is also checked against
/// `e^{-d} / (t + 1) <= J <= e^{d} / (t + 1)`.
pub fn attention_value_jacobian(alpha: &Matrix, logit_spread: Option<f64>) -> Result<Matrix> {
    let (rows, cols) = alpha.shape();
    if rows != cols {
        return Err(Error::Shape(format!("routing must be square, got {rows}x{cols}")));
    }
    for t in 0..rows {
        let row = alpha.row(t);
        if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!("entry ({t}, {j}) is negative or non-finite")));
        }
        if let Some(j) = row[t + 1..].iter().position(|v| *v != 0.0) {
            return Err(Error::InvalidInput(format!("non-causal weight at ({t}, {})", t + 1 + j)));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidInput(format!("row {t} sums to {s}, not 1")));
        }
    }
    if let Some(d) = logit_spread {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("logit spread must be finite and >= 0, got {d}")));
        }
        let (lo, hi) = ((-d).exp(), d.exp());
        for t in 0..rows {
            let n = t as f64 + 1.0;
            for tau in 0..=t {
                let j = alpha[(t, tau)];
                if j < lo / n * (1.0 - 1e-12) || j > hi / n * (1.0 + 1e-12) {
                    return Err(Error::CheckFailed {
                        lag: t - tau,
                        detail: format!("J[{t}, {tau}] = {j} outside [{}, {}]", lo / n, hi / n),
                    });
                }
            }
        }
    }
    Ok(alpha.clone())
}

/// `J[l, 0]` for `l = 0..T`: influence of the oldest token as the prefix grows.
pub fn dilution_series(jacobian: &Matrix) -> Vec<f64> {
    (0..jacobian.rows()).map(|l| jacobian[(l, 0)]).collect()
}
