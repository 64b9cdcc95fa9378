//! Experiment harness, file formats and CLI support for tabular ValueDICE.
//!
//! The algorithms live in [`valuedice_core`]; this crate adds JSON configs,
//! JSON-lines demonstrations, CSV metrics and seed sweeps.

pub mod config;
mod error;
pub mod harness;
pub mod io;

pub use config::{Algorithm, EnvironmentConfig, ExperimentConfig, ExperimentName};
pub use error::{HarnessError, Result};
pub use harness::{compare_baselines, export_kl_curve, run_experiment, Report};
pub use valuedice_core;
