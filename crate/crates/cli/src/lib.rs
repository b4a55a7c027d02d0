//! Experiment orchestration for `linproc`: configuration, verification
//! suites, `Δ_n` studies, and their CSV/JSON/SVG outputs.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod runner;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::RunError;
pub use runner::{plot, run_delta, run_rates, run_verify, with_threads, Outcome};
