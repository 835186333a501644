//! Configuration, workflows and report emission for the `berwald` command.

pub mod commands;
pub mod config;
pub mod mesh;
pub mod report;

pub use commands::{run, Command, Outcome, EXIT_ERROR, EXIT_INCONSISTENT, EXIT_OK};
pub use config::{MetricSpec, Overrides, RunConfig};
