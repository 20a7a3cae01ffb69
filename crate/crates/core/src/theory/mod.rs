//! Closed forms and envelope checkers for the feedback recursion's memory laws.

mod convolution;
mod envelope;
mod impulse;
mod path_sum;
mod positional;
mod resolvent;
mod transport;

pub use convolution::heavy_tail_convolution;
pub use envelope::{poly_decay_check, poly_decay_constant, two_sided_tail_check, PolyDecayReport, TwoSidedReport};
pub use impulse::{impulse_response, uniform_closed_form, AlphaKind, GammaKind, ImpulseSeries, RoutingSpec};
pub use path_sum::{deep_path_sum_bound, harmonic_number, KernelKind, PathLayer, PathSumReport};
pub use positional::{positional_code, positional_code_partial_sum, uniform_impulse_partial_sum};
pub use resolvent::{resolvent_kernel, uniform_resolvent_bounds, uniform_resolvent_entry};
pub use transport::{transport_exponent_check, TransportConfig, TransportReport};
