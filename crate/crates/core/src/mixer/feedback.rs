use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, softmax_in_place, Matrix};

use super::BlockParams;

/// Strictly lower-triangular routing matrix `B` with its per-row gains.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackMatrix {
    entries: Matrix,
    gains: Vec<f64>,
}

impl FeedbackMatrix {
    /// `B[t, j] = gamma_t * alpha[t, j]` for `j < t`.
    pub fn from_routing(alpha: &Matrix, gamma: &[f64]) -> Result<Self> {
        let t = alpha.rows();
        if alpha.cols() != t || gamma.len() != t {
            return Err(Error::Shape(format!(
                "routing {}x{} with {} gains",
                alpha.rows(),
                alpha.cols(),
                gamma.len()
            )));
        }
        let mut entries = Matrix::zeros(t, t);
        for i in 1..t {
            let row = alpha.row(i);
            let out = entries.row_mut(i);
            for j in 0..i {
                out[j] = gamma[i] * row[j];
            }
        }
        Self::from_entries(entries)
    }

    /// Wraps an arbitrary strictly lower-triangular matrix whose absolute row
    /// sums are below one. Row gains are the signed row sums.
    pub fn from_entries(entries: Matrix) -> Result<Self> {
        let t = entries.rows();
        if entries.cols() != t {
            return Err(Error::Shape(format!("feedback matrix must be square, got {:?}", entries.shape())));
        }
        if !entries.is_finite() {
            return Err(Error::InvalidInput("non-finite feedback entry".into()));
        }
        let mut gains = vec![0.0; t];
        for i in 0..t {
            let row = entries.row(i);
            if row[i..].iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidInput(format!("feedback row {i} is not strictly lower triangular")));
            }
            let abs: f64 = row.iter().map(|v| v.abs()).sum();
            if abs >= 1.0 {
                return Err(Error::InvalidInput(format!("feedback row {i} has absolute sum {abs} >= 1")));
            }
            gains[i] = row.iter().sum();
        }
        Ok(Self { entries, gains })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// `max_t sum_j |B[t, j]|`.
    pub fn contraction(&self) -> f64 {
        (0..self.len())
            .map(|i| self.entries.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Strict-past feedback weights, gains and the routing matrix for `abar`.
pub fn build_feedback(abar: &Matrix, params: &BlockParams) -> Result<(Matrix, Vec<f64>, FeedbackMatrix)> {
    if abar.cols() != params.d_model() || !params.has_feedback() {
        return Err(Error::Shape(format!(
            "feedback input width {} vs d_model {} (feedback branch present: {})",
            abar.cols(),
            params.d_model(),
            params.has_feedback()
        )));
    }
    let parts = feedback_parts(abar, params);
    let b = FeedbackMatrix::from_routing(&parts.alpha, &parts.gamma)?;
    Ok((parts.alpha, parts.gamma, b))
}

pub(super) struct FeedbackParts {
    pub q: Matrix,
    pub k: Matrix,
    pub alpha: Matrix,
    pub gamma: Vec<f64>,
}

pub(super) fn feedback_parts(abar: &Matrix, params: &BlockParams) -> FeedbackParts {
    let t_len = abar.rows();
    let q = abar.matmul(&params.w_qb);
    let k = abar.matmul(&params.w_kb);
    let scale = 1.0 / (params.w_qb.cols() as f64).sqrt();
    let mut alpha = Matrix::zeros(t_len, t_len);
    for t in 1..t_len {
        let qt = q.row(t);
        let row = &mut alpha.row_mut(t)[..t];
        for (j, r) in row.iter_mut().enumerate() {
            *r = scale * dot(qt, k.row(j));
        }
        softmax_in_place(row);
    }
    let gamma = (0..t_len)
        .map(|t| (dot(abar.row(t), &params.w_gamma) + params.b_gamma).tanh())
        .collect();
    FeedbackParts { q, k, alpha, gamma }
}

/// Solves `(I - B) s = f` by forward substitution.
pub fn triangular_solve(b: &FeedbackMatrix, f: &Matrix) -> Result<Matrix> {
    if f.rows() != b.len() {
        return Err(Error::Shape(format!("solve: B has {} rows, f has {}", b.len(), f.rows())));
    }
    Ok(solve_lower(b.entries(), f))
}

pub(super) fn solve_lower(b: &Matrix, f: &Matrix) -> Matrix {
    let mut s = f.clone();
    let d = f.cols();
    for t in 1..f.rows() {
        let (done, rest) = s.as_mut_slice().split_at_mut(t * d);
        let st = &mut rest[..d];
        for (j, &w) in b.row(t)[..t].iter().enumerate() {
            if w != 0.0 {
                axpy(w, &done[j * d..(j + 1) * d], st);
            }
        }
    }
    s
}

/// Adjoint of the solve: `g_f = (I - B)^{-T} g_s` and `g_B[t, j] = <g_f_t, s_j>` for `j < t`.
pub fn triangular_solve_adjoint(b: &FeedbackMatrix, s: &Matrix, g_s: &Matrix) -> Result<(Matrix, Matrix)> {
    if s.shape() != g_s.shape() || s.rows() != b.len() {
        return Err(Error::Shape(format!(
            "solve adjoint: B has {} rows, s is {:?}, g_s is {:?}",
            b.len(),
            s.shape(),
            g_s.shape()
        )));
    }
    let g_f = solve_lower_adjoint(b.entries(), g_s);
    Ok((g_f.clone(), routing_grad(&g_f, s)))
}

pub(super) fn solve_lower_adjoint(b: &Matrix, g_s: &Matrix) -> Matrix {
    let t_len = g_s.rows();
    let d = g_s.cols();
    let mut g_f = g_s.clone();
    for t in (0..t_len).rev() {
        let (head, tail) = g_f.as_mut_slice().split_at_mut((t + 1) * d);
        let gt = &mut head[t * d..];
        for i in (t + 1)..t_len {
            let w = b[(i, t)];
            if w != 0.0 {
                axpy(w, &tail[(i - t - 1) * d..(i - t) * d], gt);
            }
        }
    }
    g_f
}

pub(super) fn routing_grad(g_f: &Matrix, s: &Matrix) -> Matrix {
    let t_len = s.rows();
    let mut g_b = Matrix::zeros(t_len, t_len);
    for t in 1..t_len {
        let gt = g_f.row(t);
        for j in 0..t {
            g_b[(t, j)] = dot(gt, s.row(j));
        }
    }
    g_b
}
