//! Particle simulation of McKean–Vlasov (mean-field) SDEs
//!
//! ```text
//! dX_t = b(t, X_t, P_{X_t}) dt + σ(t, X_t, P_{X_t}) dB_t
//! ```
//!
//! The marginal law `P_{X_t}` is approximated by the empirical measure of `N`
//! interacting particles. The crate provides the Euler scheme, Picard
//! successive approximations and the Euler scheme for semimartingale drivers
//! `dX = σ dM + b dA`, together with Wasserstein-2 tooling and a harness that
//! measures convergence and stability under synchronous coupling.

// `!(x >= 0.0)` style guards are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod drivers;
mod error;
pub mod experiment;
pub mod measure;
pub mod models;
pub mod mvsde;
pub mod schemes;

pub use error::{Error, Result};
