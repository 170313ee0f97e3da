//! Configuration-driven pipeline: `gen`, `train`, `eval`, `report` and
//! `augment preview`.

pub mod commands;
pub mod config;
pub mod error;
mod plot;

pub use config::{Preset, RunConfig};
pub use error::{CliError, CliResult};
