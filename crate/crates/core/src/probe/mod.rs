//! End-to-end Jacobians of real blocks and their tail envelopes.

mod deep;
mod tail;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{block_backward, block_forward, BlockParams, MixerConfig};
use crate::numerics::Matrix;

pub use deep::{deep_stack_tail, stack_forward, DeepTailReport, LayerEnvelope, MAX_STACK_DEPTH};
pub use tail::{sessa_tail_check, JacobianBlockReport, TailCheckConfig, TailConstants};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    FiniteDiff,
    Adjoint,
}

/// `d y_t / d x_tau` of one block as a `D x D` matrix (row = output coordinate).
pub fn e2e_jacobian(
    params: &BlockParams,
    config: &MixerConfig,
    x: &Matrix,
    t: usize,
    tau: usize,
    method: JacobianMethod,
    fd_step: f64,
) -> Result<Matrix> {
    let (t_len, d) = x.shape();
    if t >= t_len || tau >= t_len {
        return Err(Error::InvalidInput(format!("pair ({t}, {tau}) outside sequence of {t_len}")));
    }
    if tau > t {
        return Ok(Matrix::zeros(d, d));
    }
    let jac = match method {
        JacobianMethod::FiniteDiff => {
            let eval = |x: &Matrix| block_forward(x, params, config).map(|r| r.0);
            source_sweep(eval, x, tau, fd_step)?.swap_remove(t)
        }
        JacobianMethod::Adjoint => {
            let (y, cache) = block_forward(x, params, config)?;
            let mut jac = Matrix::zeros(y.cols(), d);
            let mut g_y = Matrix::zeros(t_len, y.cols());
            for i in 0..y.cols() {
                g_y[(t, i)] = 1.0;
                let (g_x, _) = block_backward(&cache, params, &g_y)?;
                jac.row_mut(i).copy_from_slice(g_x.row(tau));
                g_y[(t, i)] = 0.0;
            }
            jac
        }
    };
    if !jac.is_finite() {
        return Err(Error::Probe { t, tau });
    }
    Ok(jac)
}

/// Central differences of a sequence map with respect to every coordinate of
/// `x_tau`; entry `t` of the result is `d out_t / d x_tau`.
pub fn source_sweep(
    eval: impl Fn(&Matrix) -> Result<Matrix>,
    x: &Matrix,
    tau: usize,
    fd_step: f64,
) -> Result<Vec<Matrix>> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {fd_step}")));
    }
    let (t_len, d) = x.shape();
    let mut xp = x.clone();
    let mut out: Vec<Matrix> = Vec::new();
    for j in 0..d {
        let orig = x[(tau, j)];
        xp[(tau, j)] = orig + fd_step;
        let up = eval(&xp)?;
        xp[(tau, j)] = orig - fd_step;
        let down = eval(&xp)?;
        xp[(tau, j)] = orig;
        if out.is_empty() {
            out = (0..t_len).map(|_| Matrix::zeros(up.cols(), d)).collect();
        }
        for (t, jac) in out.iter_mut().enumerate() {
            for (i, (u, v)) in up.row(t).iter().zip(down.row(t)).enumerate() {
                jac[(i, j)] = (u - v) / (2.0 * fd_step);
            }
        }
    }
    for (t, jac) in out.iter().enumerate() {
        if !jac.is_finite() {
            return Err(Error::Probe { t, tau });
        }
    }
    Ok(out)
}

/// Power-iteration operator norm of every matrix.
pub fn operator_norms(jacs: &[Matrix]) -> Vec<f64> {
    jacs.iter().map(Matrix::spectral_norm).collect()
}
