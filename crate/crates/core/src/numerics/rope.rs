//! Rotary position embedding on consecutive coordinate pairs.

use crate::error::{Error, Result};

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

/// Precomputed RoPE frequencies `omega_r = base^(-2r/d_k)`, `r = 0..d_k/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rope {
    freqs: Vec<f64>,
}

impl Rope {
    pub fn new(d_k: usize, base: f64) -> Result<Self> {
        if d_k == 0 || d_k % 2 != 0 {
            return Err(Error::Shape(format!("RoPE width must be even and positive, got {d_k}")));
        }
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::Domain(format!("RoPE base must exceed 1, got {base}")));
        }
        let freqs = (0..d_k / 2).map(|r| base.powf(-2.0 * r as f64 / d_k as f64)).collect();
        Ok(Self { freqs })
    }

    pub fn width(&self) -> usize {
        2 * self.freqs.len()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Rotates pair `r` of `v` by `omega_r * position`.
    pub fn rotate_in_place(&self, v: &mut [f64], position: f64) {
        debug_assert_eq!(v.len(), self.width());
        for (r, w) in self.freqs.iter().enumerate() {
            let (s, c) = (w * position).sin_cos();
            let (x0, x1) = (v[2 * r], v[2 * r + 1]);
            v[2 * r] = x0 * c - x1 * s;
            v[2 * r + 1] = x0 * s + x1 * c;
        }
    }

    /// Inverse rotation; this is also the adjoint used in backprop.
    pub fn unrotate_in_place(&self, v: &mut [f64], position: f64) {
        self.rotate_in_place(v, -position);
    }
}

/// Rotates `v` as a query/key at `position`.
pub fn rope_rotate(v: &[f64], position: f64, base: f64) -> Result<Vec<f64>> {
    let rope = Rope::new(v.len(), base)?;
    let mut out = v.to_vec();
    rope.rotate_in_place(&mut out, position);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::{dot, norm2};
    use proptest::prelude::*;

    #[test]
    fn position_zero_is_identity() {
        let v = [0.3, -1.2, 4.0, 0.5];
        assert_eq!(rope_rotate(&v, 0.0, DEFAULT_ROPE_BASE).unwrap(), v.to_vec());
    }

    #[test]
    fn two_dim_rotation_is_planar() {
        let t = 1.7;
        let r = rope_rotate(&[1.0, 0.0], t, DEFAULT_ROPE_BASE).unwrap();
        assert!((r[0] - t.cos()).abs() < 1e-15 && (r[1] - t.sin()).abs() < 1e-15);
        for j in 0..6 {
            let k = rope_rotate(&[1.0, 0.0], j as f64, DEFAULT_ROPE_BASE).unwrap();
            assert!((dot(&r, &k) - (t - j as f64).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn second_pair_frequency() {
        let r = rope_rotate(&[0.0, 0.0, 1.0, 0.0], 1.0, 10_000.0).unwrap();
        assert!((r[3].atan2(r[2]) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(rope_rotate(&[1.0, 2.0, 3.0], 1.0, 10_000.0), Err(Error::Shape(_))));
        assert!(matches!(Rope::new(4, 1.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn rotation_is_isometric(v in proptest::collection::vec(-10.0f64..10.0, 1..8), pos in -500.0f64..500.0, base in 1.5f64..1e5) {
            let mut v = v;
            if v.len() % 2 == 1 { v.push(0.5); }
            let r = rope_rotate(&v, pos, base).unwrap();
            prop_assert!((norm2(&r) - norm2(&v)).abs() < 1e-12 * norm2(&v).max(1.0));
        }
    }
}
