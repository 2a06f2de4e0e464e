//! Experiment orchestration: configs, runs, persisted rows and reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Kind, SimMode};
pub use report::{kpoint_table, read_records, report, Report, EMPTY_MARKER};
pub use run::{run, write_outputs, RunOutput, RunRecord};
