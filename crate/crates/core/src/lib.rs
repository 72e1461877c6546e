//! Threshold moving-average processes with feedback.
//!
//! Simulation by forward recursion and by the closed-form stationary
//! solution, exact moment and autocorrelation formulas for the special
//! cases where they exist, and empirical checks of stationarity,
//! uniqueness and exponential decay of dependence.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod noise;
pub mod stationary;
pub mod verify;

pub use error::{Result, TmaError};
pub use model::{structural_m, DeltaEstimate, Indicators, ModelSpec, RegimePair, TmaModel};
pub use noise::{Innovation, InnovationStream};
pub use stationary::{Method, SeriesPath, Truncation};
