//! The competition-based activation family and the baseline activations it
//! is compared against.

mod baseline;
mod cas;

pub use baseline::{BaselineActivation, BaselineKind, DEFAULT_LEAKY_SLOPE, PRELU_INIT, SWISH_BETA_INIT};
pub use cas::{
    carelu_backward, carelu_forward, cas_backward, cas_forward, cas_init, relu_backward, sech2,
    vanilla_sign_cas,
    CareluCache, CasCache, CasGrads, CasParams, SignMode, BETA_INIT,
};
