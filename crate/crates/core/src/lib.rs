//! Diffusions whose drift carries a parametrized `T`-periodic signal:
//! simulation, likelihood quantities, minimum distance and one-step
//! estimators, and Monte Carlo diagnostics of local asymptotic normality.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod mcstudy;
pub mod model;
pub mod optim;
pub mod quad;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
