#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod health;
pub mod linalg;
pub mod mcmc;
pub mod pollutant;
pub mod priors;
pub mod rng;
pub mod simulation;
pub mod splines;

pub use error::{Error, Result};
