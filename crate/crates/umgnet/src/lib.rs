//! File formats, configuration and the command-line driver for `umgnet-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use error::{AppError, AppResult};
