//! Risk-unbiased scaling of VaR and ES estimators.
//!
//! The library calibrates a multiplicative scalar `c` for a risk estimator so
//! that the secured position `X + c * rho_hat` is acceptable under the true
//! law, compares it with square-root-of-time style benchmarks and evaluates
//! everything with rolling-window backtests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod calibration;
pub mod cli;
pub mod distributions;
pub mod estimators;
pub mod error;
pub mod presets;
pub mod riskmeasures;
pub mod rng;

pub use distributions::{DistributionSpec, Family, Transform};
pub use error::{Error, Result};
pub use rng::RngStream;
