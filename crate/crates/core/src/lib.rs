//! Estimation of the cumulative distribution function of a scalar quantity
//! of interest of a PDE driven by one random input.
//!
//! The crate ships standard Monte Carlo, multilevel Monte Carlo (with and
//! without smoothing of the indicator function) and stratified multilevel
//! Monte Carlo, together with the two PDE testbeds used to compare them: a
//! linear diffusion problem with a random diffusion coefficient and an
//! inviscid Burgers problem with a random initial state.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdf;
pub mod config;
pub mod cost;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod inputs;
pub mod models;
pub mod report;
pub mod rng;
pub mod smoothing;

pub use error::{Error, Result};
