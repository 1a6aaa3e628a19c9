//! Experiment harness behind the `claps` binary: configuration, dataset
//! generation, calibration, evaluation and file outputs.

mod commands;
mod config;
mod evaluate;

pub use commands::*;
pub use config::*;
pub use evaluate::*;
