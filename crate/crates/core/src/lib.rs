//! Differentially private SGD without gradient clipping, noise calibration
//! for an (epsilon, delta) budget, and empirical second-order convergence
//! diagnostics on synthetic strict-saddle problems.
//!
//! The crate is organized around the lifecycle of one experiment:
//!
//! 1. [`testbed`] builds a synthetic finite-sum problem with certified
//!    constants (or any [`problem::OracleSet`] supplies its own oracles).
//! 2. [`privacy`] resolves the privacy budget into a [`privacy::NoisePlan`]
//!    (gradient bound, Gaussian scale, step size, iteration count, escape
//!    schedule).
//! 3. [`optimizer`] runs noisy SGD, with or without per-sample clipping,
//!    producing a full [`optimizer::RunTrace`].
//! 4. [`sosp`] checks stationarity exactly and selects a candidate privately;
//!    [`analysis`] audits the trace against the descent, localization and
//!    saddle-escape predictions.
//! 5. [`harness`] provides config parsing, trace persistence and the epsilon
//!    sweep driver behind the CLI.

pub mod analysis;
pub mod dense;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod privacy;
pub mod problem;
pub mod rng;
pub mod sosp;
pub mod testbed;

pub use error::{Error, Result};
