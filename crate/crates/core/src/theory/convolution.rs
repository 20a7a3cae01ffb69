use crate::error::{Error, Result};

/// `k`-fold positive-lag self-convolution of `n^{-beta}`, indexed by `n`
/// (`out[0]` is unused and zero). Uses `(a * b)(n) = sum_{m=1}^{n-1} a(n-m) b(m)`.
pub fn heavy_tail_convolution(beta: f64, k: usize, n_max: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    if k == 0 || n_max < k {
        return Err(Error::Domain(format!("need k >= 1 and n_max >= k, got k={k}, n_max={n_max}")));
    }
    let base: Vec<f64> = (0..=n_max).map(|n| if n == 0 { 0.0 } else { (n as f64).powf(-beta) }).collect();
    let mut cur = base.clone();
    for _ in 1..k {
        let mut next = vec![0.0; n_max + 1];
        for (n, slot) in next.iter_mut().enumerate().skip(2) {
            *slot = (1..n).map(|m| cur[n - m] * base[m]).sum();
        }
        cur = next;
    }
    Ok(cur)
}
