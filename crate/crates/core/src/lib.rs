//! Explicit constants of the Gagliardo-Nirenberg-Sobolev family, entropy functionals
//! on radial profiles, and the nonlocal fast diffusion flow with best-matching
//! Barenblatt rescaling.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod family;
pub mod flow;
pub mod functionals;
pub mod io;
pub mod odemodel;
pub mod optimize;
pub mod params;
pub mod profiles;
pub mod radial;
pub mod special;
pub mod verify;

pub use error::{GnsError, Result};
pub use params::{derive_params, derive_params_from_m, Mass, Params};
