use crate::error::{Error, Result};
use crate::numerics::gamma_ratio;

/// Code `c_0 = 1`, `c_t = 1 + (gamma/t) sum_{j<t} c_j` generated by constant
/// forward values and uniform feedback.
pub fn positional_code(gamma: f64, t_len: usize) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let mut c = Vec::with_capacity(t_len);
    let mut sum = 0.0;
    for t in 0..t_len {
        let v = if t == 0 { 1.0 } else { 1.0 + gamma / t as f64 * sum };
        sum += v;
        c.push(v);
    }
    Ok(c)
}

/// `prod_{i=1}^t (1 + gamma/i) = Gamma(t+1+gamma) / (Gamma(1+gamma) Gamma(t+1))`,
/// the partial sum of the uniform-routing impulse response from source 0.
pub fn uniform_impulse_partial_sum(gamma: f64, t: usize) -> Result<f64> {
    let t = t as f64;
    Ok(gamma_ratio(t + 1.0 + gamma, t + 1.0)? / gamma_ratio(1.0 + gamma, 1.0)?)
}

/// Closed form of `S_t = sum_{j<=t} c_j`: `S_t = P_t sum_{i<=t} 1/P_i` with
/// `P_t` the impulse partial sum above.
pub fn positional_code_partial_sum(gamma: f64, t: usize) -> Result<f64> {
    let mut inv = 0.0;
    for i in 0..=t {
        inv += 1.0 / uniform_impulse_partial_sum(gamma, i)?;
    }
    Ok(uniform_impulse_partial_sum(gamma, t)? * inv)
}
