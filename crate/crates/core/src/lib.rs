//! Storage, retrieval and frequency conversion of single photons in
//! inhomogeneously broadened solid-state memories.
//!
//! The spectral pipeline works on complex photon amplitudes `E(ω)` on a
//! uniform frequency grid:
//!
//! * [`response`] evaluates the medium response integrals,
//! * [`storage`] maps an input spectrum to the stored spin wave,
//! * [`retrieval`] builds and applies retrieval kernels `S(ω, ω′)`,
//! * [`transducer`] retrieves an optical photon from a stored microwave
//!   excitation,
//! * [`metrics`] scores outputs.
//!
//! [`oracle`] is an independent time-domain integrator used to validate
//! the spectral results.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod quad;
pub mod response;
pub mod retrieval;
pub mod storage;
pub mod transducer;
pub mod transition;

pub use distributions::{
    compose_broadening, EmitterDistribution, Shape, SpatialProfile, SpectralProfile,
};
pub use error::{Error, Result};
pub use grid::{field_norm, FrequencyGrid, SpaceGrid, SpectralField};
pub use transition::{ControlVelocity, Strength, TransitionParams, TransitionSpec};
