//! Two-stage least squares with many instruments.
//!
//! The crate provides classical and spectrally regularized 2SLS, synthetic
//! data generators for many-instrument regimes, diagnostics for the
//! first-stage quantity `π'(Z'Z/N)π` and for the instrument covariance
//! spectrum, and a reproducible Monte Carlo harness. The `ivspectral`
//! binary wraps all of it behind `simulate`, `estimate` and `diagnose`.

pub mod cli;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};

/// Toolkit version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
