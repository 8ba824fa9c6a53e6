//! Mixed CAV/HDV traffic toolkit: car-following models, platoon partitioning,
//! LQR synthesis for mixed platoons, a probabilistic frequency-domain string
//! stability criterion, and nonlinear perturbation simulations with
//! dispersion metrics.

pub mod composition;
pub mod config;
pub mod error;
pub mod frequency;
pub mod lqr;
pub mod metrics;
pub mod models;
pub mod output;
pub mod sim;
pub mod statespace;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
