//! Tabular imitation learning by occupancy matching.
//!
//! This crate holds the pure algorithmic part of the project: finite MDPs
//! with exact discounted occupancies, the Donsker-Varadhan form of the KL
//! divergence between occupancies, the ValueDICE saddle-point objective with
//! its exact and minibatch trainers, and the behavioral-cloning and tabular
//! GAIL baselines used for comparison. Everything here is `no_std` (with
//! `alloc`); file formats, the CLI and experiment orchestration live in the
//! `valuedice` crate.
//!
//! Every stochastic operation takes an explicit seed or an explicit RNG, so
//! identical inputs always give bitwise-identical outputs.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod divergence;
pub mod environments;
mod error;
mod linalg;
mod math;
pub mod mdp;
pub mod rng;
mod table;
pub mod valuedice;

pub use error::{Error, Result};
pub use table::StateActionTable;

pub use mdp::{
    compute_occupancy, occupancy_monte_carlo, sample_trajectory, softmax_policy, validate_mdp,
    Occupancy, Policy, TabularMdp, Trajectory, Transition, ValidationReport, Violation,
};

/// Smoothing added to both sides of every log-ratio of occupancies.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Magnitude bound on dual-function values and on `nu - B nu` inside exponentials.
pub const CLIP_BOUND: f64 = 40.0;

/// Logit given to the chosen action of a deterministic policy.
pub const DETERMINISTIC_LOGIT: f64 = 50.0;
