//! Configuration, command orchestration and output files for the
//! insurer/bank jump-diffusion game.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{LoadedConfig, RunConfig};
pub use error::AppError;
pub use runner::Parallel;
