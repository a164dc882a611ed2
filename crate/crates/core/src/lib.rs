//! Workbench for online b-matching with stochastic rewards.
//!
//! - [`model`]: instances, the `G_n^b` family and other generators, JSON files.
//! - [`engine`]: the online simulation loop and Monte Carlo estimation.
//! - [`policies`]: StochasticBalance and Greedy.
//! - [`benchmarks`]: the fractional LP optimum and the clairvoyant sequential optimum.
//! - [`analysis`]: closed-form bounds, recurrences and tail probabilities.
//! - [`dualaudit`]: primal-dual accounting for StochasticBalance runs.
//! - [`experiments`]: convergence and comparison tables.

pub mod analysis;
pub mod benchmarks;
pub mod dualaudit;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod report;

pub use error::{Error, Result};
