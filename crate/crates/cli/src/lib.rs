//! Driver for `kinetofluid-core`: configuration files, CSV/JSON/binary
//! outputs, golden-file checks and the `verify` property suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod golden;
pub mod output;
pub mod scenario;
pub mod suites;

pub use config::{ConfigError, Parsed, RunConfig};
pub use error::{exit, CliError, CliResult};
