//! Command-line front end: configuration, artifacts, the Monte Carlo
//! harness and the empirical pipelines.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod empirical;
pub mod montecarlo;
