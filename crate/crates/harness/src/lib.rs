//! Experiment runner for the neural net estimator: configuration, scenario
//! drivers, result tables and the search-session file format.

pub mod config;
pub mod data;
pub mod error;
pub mod scenarios;
pub mod summary;
pub mod table;

pub use config::{ConfigFile, ExperimentConfig, KnobOverrides, Knobs, Scale, Scenario};
pub use error::{HarnessError, Result};
pub use scenarios::{run_and_write, run_experiment};
pub use summary::{summarize, SummaryRecord, Truth};
pub use table::{Artifacts, DataFile, EstimateRow, ResultTable};
