//! Batch front end for `levy-scale`: configuration, observation files,
//! output manifests and the `compute`, `simulate`, `estimate` and `mc`
//! commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod output;

pub use commands::{run, Command, RunOptions};
pub use config::{load, ExperimentConfig};
