//! Experiment harness around `starnoma-core`: TOML scenario files, CSV
//! result tables, policy checkpoints and the `run` / `compare` /
//! `dump-scenario` commands behind the `starnoma` binary.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod dump;
mod error;
pub mod experiment;
pub mod tables;

pub use config::Settings;
pub use error::{SimError, SimResult};
pub use experiment::{run, Algo, ExperimentSpec};
