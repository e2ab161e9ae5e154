//! Core library for the slicing-cell simulator: environment dynamics,
//! reputation protocol, dense networks with explicit backprop, the
//! constrained actor-critic trainer, and experiment orchestration.

pub mod agent;
pub mod config;
pub mod env;
pub mod experiments;
pub mod error;
pub mod nn;
pub mod reputation;
pub mod rng;

pub use config::ExperimentConfig;
pub use error::{Result, SimError};
