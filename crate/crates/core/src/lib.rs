//! Conditional extremes for stationary time series.

pub mod dists;
pub mod error;
pub mod fit;
pub mod functionals;
pub mod generators;
pub mod margins;
pub mod norming;
pub mod optim;
pub mod resample;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
