//! File formats and subcommands of the `monorange` command-line tool.
//!
//! The numerical work lives in `monorange-core`; this crate parses inputs,
//! writes outputs and maps failures onto stable exit codes (see
//! [`error::exit`]).

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use args::Cli;
pub use error::CliError;
