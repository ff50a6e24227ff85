//! Generalized covariance (GCov) estimation for semiparametric time series
//! models: mixed causal–noncausal autoregressions and double
//! autoregressions, with constrained estimation, specification tests,
//! binding functions and order selection.

pub mod constraints;
pub mod error;
pub mod fit;
pub mod gcov;
pub mod inference;
pub mod linalg;
pub mod misspec;
pub mod models;
pub mod optim;
pub mod rng;
pub mod selection;
pub mod timeseries;

pub use error::{Error, Result};
