//! Dense matrices, activations, RoPE, Gamma ratios and decay fits.

pub mod activation;
pub mod fit;
pub mod gamma;
pub mod matrix;
pub mod rope;

pub use activation::{gelu, gelu_prime, sigmoid, softmax_backward, softmax_in_place, softmax_row, softplus};
pub use fit::{default_window, fit_exponential, fit_power_law, DecayFit, MIN_FIT_LAGS};
pub use gamma::{gamma_ratio, ln_gamma, ln_gamma_ratio, log_gamma_ratio};
pub use matrix::{axpy, dot, norm2, Matrix, SequenceTensor};
pub use rope::{rope_rotate, Rope, DEFAULT_ROPE_BASE};
