//! Batch commands and the HTTP query service for pathline dynamics caches.

pub mod args;
pub mod commands;
pub mod error;
pub mod service;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
