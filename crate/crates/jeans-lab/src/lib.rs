//! Numerical laboratory for homogeneous self-similar blowup in the sourced
//! Euler-Poisson system with a modified Chaplygin-type equation of state.
//!
//! The pipeline runs from the model constants ([`params`]) through the
//! homogeneous contrast ODE ([`ode`]) and its compactified time
//! ([`timemap`]) to the exact reference fields ([`reference`]), the
//! log-periodic inhomogeneous PDE ([`pde`]) and the Fuchsian-form checks
//! ([`fuchsian`]).

pub mod error;
pub mod fuchsian;
pub mod numerics;
pub mod ode;
pub mod params;
pub mod pde;
pub mod psi;
pub mod reference;
pub mod timemap;

pub use error::{Error, Result};
pub use params::{build_params, ModelParams, ParamsInput};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
