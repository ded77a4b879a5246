//! Non-parametric optimistic likelihood estimation.
//!
//! The likelihood of an observation under an unknown data-generating measure is
//! approximated by the largest mass any measure in an ambiguity set around an
//! empirical measure can place on it. Ambiguity sets are f-divergence balls,
//! mean–covariance sets or Wasserstein balls. The estimates feed a surrogate
//! posterior over a finite parameter set and a probabilistic classifier.

pub mod bench;
pub mod classify;
pub mod divergence_ball;
pub mod error;
pub mod inference;
pub mod kernel_baseline;
pub mod measures;
pub mod moment_ball;
pub mod rng;
pub mod wasserstein_ball;

pub use error::{Error, Result};
