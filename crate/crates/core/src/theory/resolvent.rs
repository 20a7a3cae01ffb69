use crate::error::{Error, Result};
use crate::mixer::{triangular_solve, FeedbackMatrix};
use crate::numerics::{gamma_ratio, log_gamma_ratio, Matrix};

/// `Theta = (I - B)^{-1}`, lower triangular with unit diagonal.
pub fn resolvent_kernel(b: &FeedbackMatrix) -> Result<Matrix> {
    triangular_solve(b, &Matrix::identity(b.len()))
}

/// `Theta[i, j]` for uniform routing and constant gain:
/// `gamma Gamma(j+1)/Gamma(j+1+gamma) * Gamma(i+gamma)/Gamma(i+1)` for `j < i`.
pub fn uniform_resolvent_entry(gamma: f64, i: usize, j: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => {
            gamma * gamma_ratio(j as f64 + 1.0, j as f64 + 1.0 + gamma)? * log_gamma_ratio(i as f64, gamma)?
        }
    })
}

/// Constants `(c-, c+)` with `c- (j+1)^{-gamma} (i+1)^{-beta} <= Theta[i, j] <= c+ (j+1)^{-gamma} (i+1)^{-beta}`
/// for `j < i`, `beta = 1 - gamma`: `c- = gamma`, `c+ = gamma 4^{beta}`.
pub fn uniform_resolvent_bounds(gamma: f64) -> (f64, f64) {
    let beta = 1.0 - gamma;
    (gamma, gamma * 4f64.powf(beta))
}
