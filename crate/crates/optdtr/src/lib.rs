//! Partial welfare ordering of dynamic treatment regimes.
//!
//! Given the joint distribution of binary outcomes, endogenous treatments,
//! and instruments, this crate computes the sharp partial ordering of
//! counterfactual welfares over all dynamic treatment regimes, the
//! identified set of the optimal regime, welfare bounds, and a bootstrap
//! confidence set, via linear programming over a discrete latent
//! response-type simplex.

pub mod assumptions;
pub mod cli;
pub mod error;
pub mod inference;
pub mod lpcore;
pub mod matrices;
pub mod ordering;
pub mod regimes;
pub mod simulate;
pub mod statespace;

pub use error::{Error, Result};
