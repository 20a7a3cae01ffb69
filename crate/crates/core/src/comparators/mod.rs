//! Influence diagnostics for the comparison classes: causal attention,
//! diagonal ZOH selective channels and stable LTI systems.

mod attention;
mod lti;
mod mamba;
mod zoh;

pub use attention::{attention_value_jacobian, dilution_series, uniform_causal_routing};
pub use lti::{lti_impulse_response, LtiResponse, LtiSystem};
pub use mamba::{mamba_e2e_check, mamba_e2e_fd_jacobian, LocalZohBlock, MambaConstants, MambaE2eReport};
pub use zoh::{freeze_rate_check, mamba_impulse_jacobian, zoh_simulate, FreezeReport, ZohChannel};
