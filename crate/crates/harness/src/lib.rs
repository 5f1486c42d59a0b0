//! Experiment runner for conformal prediction-set size bounds: trial
//! pipeline, resumable sweeps, bound queries and SVG/markdown reports.

pub mod config;
pub mod error;
pub mod experiment;
pub mod query;
pub mod records;
pub mod report;

pub use config::{DataSource, ExperimentConfig, GridPoint, SlackModeName, Task};
pub use error::{Error, Result};
pub use experiment::{population_check, population_checks, run_sweep, run_trial, PopulationCheck, SweepOutput};
pub use query::{evaluate, BoundRequest};
pub use records::{read_records, TrialRecord};
pub use report::render_report;
