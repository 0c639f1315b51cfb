//! Command-line front end: configuration schema, validation, and the
//! per-subcommand experiment executors.

pub mod config;
pub mod run;
