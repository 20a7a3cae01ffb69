use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, softplus, Matrix};
use crate::table::EnvelopeRow;

/// Local ZOH-diagonal selective block with tokenwise maps
/// `delta(x) = softplus(<w_delta, x> + b_delta)`, `u(x) = <w_u, x>`,
/// `B(x) = tanh(W_b x)`, `C(x) = tanh(W_c x)` and scalar output `y_t = <C(x_t), h_t>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalZohBlock {
    pub rates: Vec<f64>,
    pub w_delta: Vec<f64>,
    pub b_delta: f64,
    pub w_u: Vec<f64>,
    /// `N x D`.
    pub w_b: Matrix,
    /// `N x D`.
    pub w_c: Matrix,
}

/// Explicit constants of the end-to-end bound on `{x : ||x_t|| <= radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MambaConstants {
    pub radius: f64,
    pub lambda: f64,
    pub u_bound: f64,
    pub b_bound: f64,
    pub c_bound: f64,
    pub lip_a: f64,
    pub lip_b: f64,
    pub lip_u: f64,
    pub state_bound: f64,
    pub source_jacobian: f64,
    /// `c_bound * source_jacobian`.
    pub c_r: f64,
    /// `softplus(b_delta - ||w_delta|| radius)`: certified lower bound on every step size.
    pub c_delta: f64,
}

impl LocalZohBlock {
    /// Random block with `N(0, scale^2 / D)` weights.
    pub fn random(rates: Vec<f64>, d: usize, b_delta: f64, delta_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let n = rates.len();
        let std = 1.0 / (d as f64).sqrt();
        let mut g = || -> f64 { StandardNormal.sample(&mut *rng) };
        let w_delta = (0..d).map(|_| g() * std * delta_scale).collect();
        let w_u = (0..d).map(|_| g() * std).collect();
        let w_b = Matrix::from_fn(n, d, |_, _| g() * std);
        let w_c = Matrix::from_fn(n, d, |_, _| g() * std);
        let block = Self { rates, w_delta, b_delta, w_u, w_b, w_c };
        block.validate()?;
        Ok(block)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rates.len();
        let d = self.w_delta.len();
        if n == 0 || d == 0 {
            return Err(Error::Shape("block needs at least one mode and one feature".into()));
        }
        if let Some(a) = self.rates.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!("decay rate {a} must be positive")));
        }
        if self.w_u.len() != d || self.w_b.shape() != (n, d) || self.w_c.shape() != (n, d) {
            return Err(Error::Shape(format!("inconsistent block shapes for N={n}, D={d}")));
        }
        Ok(())
    }

    pub fn d_model(&self) -> usize {
        self.w_delta.len()
    }

    pub fn lambda(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn step_size(&self, x: &[f64]) -> f64 {
        softplus(dot(&self.w_delta, x) + self.b_delta)
    }

    /// Outputs `y_t` and step sizes `delta_t` for a `T x D` input.
    pub fn forward(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        if x.cols() != self.d_model() {
            return Err(Error::Shape(format!("input has {} features, block expects {}", x.cols(), self.d_model())));
        }
        let n = self.rates.len();
        let mut h = vec![0.0; n];
        let mut ys = Vec::with_capacity(x.rows());
        let mut deltas = Vec::with_capacity(x.rows());
        for t in 0..x.rows() {
            let xt = x.row(t);
            let delta = self.step_size(xt);
            let u = dot(&self.w_u, xt);
            let b = self.w_b.mul_vec(xt);
            let c = self.w_c.mul_vec(xt);
            let mut y = 0.0;
            for m in 0..n {
                let a = self.rates[m];
                h[m] = (-a * delta).exp() * h[m] - (-a * delta).exp_m1() / a * b[m].tanh() * u;
                y += c[m].tanh() * h[m];
            }
            ys.push(y);
            deltas.push(delta);
        }
        Ok((ys, deltas))
    }

    pub fn constants(&self, radius: f64) -> MambaConstants {
        let n = self.rates.len() as f64;
        let lambda = self.lambda();
        let a_max = self.rates.iter().copied().fold(0.0, f64::max);
        let wd = norm2(&self.w_delta);
        let lip_u = norm2(&self.w_u);
        let lip_b = self.w_b.spectral_norm();
        let u_bound = lip_u * radius;
        let b_bound = n.sqrt().min(lip_b * radius);
        let c_bound = n.sqrt().min(self.w_c.spectral_norm() * radius);
        let lip_a = a_max * wd;
        let state_bound = n.sqrt() * b_bound * u_bound / lambda;
        let source_jacobian =
            lip_a * state_bound + lip_a / lambda * b_bound * u_bound + (lip_b * u_bound + b_bound * lip_u) / lambda;
        MambaConstants {
            radius,
            lambda,
            u_bound,
            b_bound,
            c_bound,
            lip_a,
            lip_b,
            lip_u,
            state_bound,
            source_jacobian,
            c_r: c_bound * source_jacobian,
            c_delta: softplus(self.b_delta - wd * radius),
        }
    }
}

/// `||d y_t / d x_tau||_2` by central differences with step `h`.
pub fn mamba_e2e_fd_jacobian(block: &LocalZohBlock, x: &Matrix, t: usize, tau: usize, h: f64) -> Result<f64> {
    if tau >= t || t >= x.rows() {
        return Err(Error::Domain(format!("need tau < t < {}, got tau={tau}, t={t}", x.rows())));
    }
    let mut xp = x.clone();
    let mut grad = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let orig = x[(tau, j)];
        xp[(tau, j)] = orig + h;
        let up = block.forward(&xp)?.0[t];
        xp[(tau, j)] = orig - h;
        let down = block.forward(&xp)?.0[t];
        xp[(tau, j)] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    let norm = norm2(&grad);
    if !norm.is_finite() {
        return Err(Error::Probe { t, tau });
    }
    Ok(norm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MambaE2eReport {
    pub source: usize,
    pub constants: MambaConstants,
    /// Envelope is `C(R) exp(-lambda sum delta)`.
    pub rows: Vec<EnvelopeRow>,
    /// Slope of `ln ||J||` against the lag.
    pub fitted_rate: Option<f64>,
}

/// Measures every lag from `source` with finite differences and checks it
/// against the explicit bound; the region radius is `max_t ||x_t||`.
pub fn mamba_e2e_check(block: &LocalZohBlock, x: &Matrix, source: usize, h: f64) -> Result<MambaE2eReport> {
    let (_, deltas) = block.forward(x)?;
    let radius = (0..x.rows()).map(|t| norm2(x.row(t))).fold(0.0, f64::max);
    let constants = block.constants(radius);
    let mut rows = Vec::new();
    let mut acc = 0.0;
    for t in source + 1..x.rows() {
        acc += deltas[t];
        let value = mamba_e2e_fd_jacobian(block, x, t, source, h)?;
        let envelope = constants.c_r * (-constants.lambda * acc).exp();
        rows.push(EnvelopeRow { lag: t - source, value, envelope, violated: value > envelope });
    }
    if let Some(r) = rows.iter().find(|r| r.violated) {
        return Err(Error::CheckFailed {
            lag: r.lag,
            detail: format!("FD Jacobian {} above envelope {}", r.value, r.envelope),
        });
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.value > 0.0).map(|r| (r.lag as f64, r.value.ln())).collect();
    let fitted_rate = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(MambaE2eReport { source, constants, rows, fitted_rate })
}
