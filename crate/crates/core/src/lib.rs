//! Diagnostics, perturbations, a small recurrent forecaster and set-level
//! metrics for forecasting the distribution of the next N events of a user.

pub mod data;
pub mod diagnostics;
mod error;
pub mod experiment;
pub mod forecast;
pub mod metrics;
pub mod micronet;
pub mod objectives;
pub mod perturb;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
