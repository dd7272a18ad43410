//! Command-line driver for the mobility-edge pipeline: config parsing, task
//! dispatch, artifact writing and the acceptance suite.

pub mod config;
pub mod error;
pub mod output;
pub mod suite;
pub mod tasks;

pub use config::{Overrides, RunConfig, TaskKind};
pub use error::CliError;
pub use suite::{run_suite, run_suite_with, CriterionResult, SuiteOptions, SuiteReport};
pub use tasks::run;
