//! Domain types for mean-field SDEs of the form
//!
//! ```text
//! dX_t = b(t, X_t, P_{X_t}) dt + σ(t, X_t, P_{X_t}) dB_t,   X_0 = x
//! ```
//!
//! A [`Model`] bundles the drift `b` and diffusion `σ`, both of which read the
//! current marginal law through a [`Law`](crate::measure::Law) view. Time grids
//! are [`TimePartition`]s; the hypothesis checkers in [`checks`] evaluate the
//! linear-growth and Lipschitz bounds on sample grids.

pub mod checks;
mod model;
mod partition;
mod state;

pub use checks::{check_growth, check_lipschitz, GrowthReport, LipschitzReport};
pub use model::{FnModel, Model, Regularity, Relabeled};
pub use partition::{build_uniform_partition, phi_floor, TimePartition};
pub use state::StateVector;
