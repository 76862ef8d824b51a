//! File formats, configuration, manifests, parallel runs and the command
//! line for joint longitudinal-survival modelling. The numerical work lives
//! in [`jointsurv_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod run;

pub use config::{Overrides, Preset, RunConfig};
pub use error::{CliError, Result, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
pub use jointsurv_core as core;
