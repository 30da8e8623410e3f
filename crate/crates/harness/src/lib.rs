//! Experiment runner for topology-modulated magneto-inductive links:
//! eigenvalue sweeps, pilot-aided error bounds, blind-detection Monte Carlo
//! and power accounting, written as CSV with a JSON manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod mc;
pub mod output;
pub mod scenarios;

pub use config::{ExperimentConfig, Scenario};
