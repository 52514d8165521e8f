// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coupling;
pub mod covariance;
pub mod error;
pub mod hypothesis;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod scheduler;
pub mod spectral;
pub mod validator;

pub use error::{Error, Result};
