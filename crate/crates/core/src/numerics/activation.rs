//! Exact GELU and numerically stable softmax.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `GELU(x) = x * Phi(x)` with the exact Gaussian CDF.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

#[inline]
pub fn gelu_prime(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `scale * logits` with max subtraction.
pub fn softmax_row(logits: &[f64], scale: f64) -> Result<Vec<f64>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("softmax scale must be positive, got {scale}")));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit at index {i}")));
    }
    let mut out: Vec<f64> = logits.iter().map(|v| v * scale).collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked in-place softmax for hot loops. Empty input is a no-op.
#[inline]
pub fn softmax_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    v.iter_mut().for_each(|x| *x *= inv);
}

/// Backpropagates through a softmax row: returns `dL/dlogit` given the
/// probabilities and `dL/dprob`.
#[inline]
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64], out: &mut [f64]) {
    let inner: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
    for ((o, p), g) in out.iter_mut().zip(probs).zip(grad_probs) {
        *o = p * (g - inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_logits_give_uniform() {
        let p = softmax_row(&[2.5; 4], 3.0).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_reference_values() {
        // e^k / (e + e^2 + e^3), evaluated independently in extended precision
        let p = softmax_row(&[1.0, 2.0, 3.0], 1.0).unwrap();
        let expect = [0.090_030_573_170_380_46, 0.244_728_471_054_797_64, 0.665_240_955_774_821_9];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax_row(&[1.0, f64::INFINITY], 1.0).is_err());
        assert!(softmax_row(&[1.0, f64::NAN], 1.0).is_err());
        assert!(softmax_row(&[1.0], 0.0).is_err());
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu_prime(0.0) - 0.5).abs() < 1e-16);
        // Phi(1) = 0.5 * (1 + erf(1/sqrt 2))
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-10);
    }

    #[test]
    fn gelu_prime_matches_central_difference() {
        let h = 1e-6;
        let mut x = -6.0;
        while x <= 6.0 {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_prime(x)).abs() < 1e-8, "x={x}");
            x += 0.01;
        }
    }

    #[test]
    fn scaled_gelu_approximates_relu() {
        for &l in &[1.0, 4.0, 25.0, 300.0] {
            let bound = 1.0 / (l * (2.0 * PI).sqrt());
            let mut x = -5.0;
            while x <= 5.0 {
                let err = (gelu(l * x) / l - x.max(0.0)).abs();
                assert!(err <= bound + 1e-15, "L={l} x={x} err={err} bound={bound}");
                x += 0.001;
            }
        }
    }

    proptest! {
        #[test]
        fn gelu_odd_part_is_identity(x in -40.0f64..40.0) {
            prop_assert!((gelu(x) - gelu(-x) - x).abs() <= 1e-14 * x.abs().max(1.0));
        }

        #[test]
        fn softmax_shift_invariant(v in proptest::collection::vec(-20.0f64..20.0, 1..12), c in -50.0f64..50.0) {
            let a = softmax_row(&v, 1.0).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax_row(&shifted, 1.0).unwrap();
            let sum: f64 = a.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(*x >= 0.0);
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn bounded_spread_gives_near_uniform(v in proptest::collection::vec(-3.0f64..3.0, 1..40)) {
            let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
            let n = v.len() as f64;
            for p in softmax_row(&v, 1.0).unwrap() {
                prop_assert!(p >= (-spread).exp() / n * (1.0 - 1e-12));
                prop_assert!(p <= spread.exp() / n * (1.0 + 1e-12));
            }
        }

        #[test]
        fn large_gap_concentrates(n in 2usize..64, gap in 0.1f64..5.0, delta in 1e-6f64..0.5, seed in 0u64..1000) {
            // unique max with gap `gap`; scale chosen so that scale*gap >= log((n-1)/delta)
            let scale = (((n - 1) as f64) / delta).ln() / gap;
            let mut logits: Vec<f64> = (0..n).map(|i| -gap - ((i as u64 * 31 + seed) % 7) as f64 * 0.1).collect();
            let star = (seed as usize) % n;
            logits[star] = 0.0;
            let p = softmax_row(&logits, scale).unwrap();
            prop_assert!(p[star] >= 1.0 - delta - 1e-12);
        }
    }
}
