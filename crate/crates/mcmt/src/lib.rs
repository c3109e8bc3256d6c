//! File formats, configuration and the `track` / `eval` / `synth` commands
//! built on `mcmt-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{CliError, Result};
