//! Batch front end: experiment configs, parameter scans and plot data.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod scan;

pub use commands::{run, Cli};
pub use config::{ExperimentConfig, Seeds};
pub use error::{CliError, Result};
pub use plot::emit_plot_data;
pub use scan::{run_scan, CellReport, Manifest};
