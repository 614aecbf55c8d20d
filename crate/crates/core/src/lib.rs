//! Local Gaussian partial correlation.
//!
//! The crate estimates local correlation matrices by local likelihood on
//! marginally normal pseudo-observations, turns them into local partial
//! correlations with delta-method standard errors, and tests conditional
//! independence with a bootstrap that resamples from locally Gaussian
//! conditional densities. Generators for the standard level/power
//! simulation designs live in [`dgp`].
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. The `parallel` feature spreads bootstrap replicates and
//! Monte Carlo replications over a rayon pool; results do not depend on it.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod citest;
pub mod conddens;
pub mod dgp;
mod error;
pub mod lgpc;
pub mod linalg;
pub mod locallik;
pub mod loccor;
pub mod normal;
pub mod optim;
mod par;
pub mod stream;
pub mod transform;

pub use citest::{ci_test, granger_test, HFunction, Region, TestConfig, TestResult};
pub use dgp::{benchmark, generate, BenchmarkOptions, BenchmarkReport, DgpFamily, DgpId, DgpSpec};
pub use error::{Error, Result};
pub use lgpc::PartialCorrelationEstimate;




pub use locallik::{plugin_bandwidth, Bandwidth, BandwidthRule, Kernel, LocalFit};
pub use loccor::{LocalCorrelationField, Method};
pub use transform::{to_pseudo_normal, DataMatrix, MarginTable, PseudoSample};
