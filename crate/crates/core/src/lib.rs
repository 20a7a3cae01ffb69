//! Numerical laboratory for the Sessa sequence mixer.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] dense f64 arrays, activations, RoPE, softmax, log-Gamma
//!   ratios and decay-law fitting.
//! * [`mixer`] the Sessa block (forward attention, strict-past feedback
//!   attention, causal triangular solve) with an exact analytic backward pass.
//! * [`theory`] closed forms and envelope checkers for the feedback
//!   recursion's memory-decay laws.
//! * [`comparators`] causal attention, ZOH selective-SSM and LTI influence
//!   diagnostics.
//! * [`probe`] end-to-end Jacobian measurement of real blocks.
//! * [`tasks`] and [`train`] synthetic long-context tasks and the desk-scale
//!   training harness.
//! * [`table`] CSV tables shared by every diagnostic.

pub mod comparators;
pub mod error;
pub mod mixer;
pub mod numerics;
pub mod probe;
pub mod table;
pub mod tasks;
pub mod theory;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
