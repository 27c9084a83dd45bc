//! File formats, run configuration and the `neurop` command line around
//! [`neurop_core`].
//!
//! Datasets and checkpoints are stored as a small JSON header followed by
//! raw little-endian `f64` arrays; see [`format`]. Human-facing
//! configuration and metrics are JSON, plot data is CSV.

pub mod commands;
pub mod config;
pub mod exec;
pub mod format;
pub mod model;

pub use commands::{eval, gen_data, train, EvalArgs, EvalMode};
pub use config::RunConfig;
pub use format::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint};
pub use model::AnyModel;
