//! Bayesian joint modelling of a longitudinal biomarker and overall survival.
//!
//! This crate holds the pure numerical machinery and is `no_std` (it needs
//! `alloc`): cohort validation and Kaplan–Meier estimation, the joint
//! log-posterior with Weibull proportional hazards and a linear biomarker
//! trajectory, an adaptive Metropolis-within-Gibbs sampler, convergence
//! diagnostics and DIC, posterior-predictive extrapolation, and a synthetic
//! cohort generator. File formats, configuration, parallel orchestration and
//! the command line live in the companion `jointsurv` crate.
#![no_std]

extern crate alloc;

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod extrapolate;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

/// Months per year; horizons quoted in years are converted exactly.
pub const MONTHS_PER_YEAR: f64 = 12.0;
