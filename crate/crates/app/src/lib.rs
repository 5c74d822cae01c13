//! Command-line tool and HTTP service for clinical-trial retrieval.
//!
//! [`commands`] holds the batch workflow (index, generate, run, evaluate),
//! [`server`] the JSON API used for interactive review, and [`cli`] the
//! argument parsing that ties them to the `trialir` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod server;

pub use config::AppConfig;
