//! Experiment orchestration for the HAT chain: configuration, replicas,
//! statistics and CSV / JSON / SVG output.

pub mod audits;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod table;

use thiserror::Error;

pub use config::{Experiment, ExperimentConfig, Format, Params};
pub use experiments::{run_experiment, Check, Outcome};
pub use plot::{emit_plot, Axes, PlotSpec};
pub use table::{Table, Value};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] hat_core::HatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("plot: {0}")]
    Plot(String),
}
