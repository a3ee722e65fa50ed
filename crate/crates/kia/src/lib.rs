//! Filesystem side of the Koopman invertible autoencoder: binary dataset and
//! checkpoint formats, experiment configuration, report emission (CSV, JSON,
//! SVG), and the subcommand harness behind the `kia` binary.

pub mod config;
pub mod format;
pub mod harness;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, SeedPlan};
pub use format::{load_any, load_checkpoint, load_dataset, load_grid, DatasetFile, FormatError};
