//! Experiment harness: configuration, the episode loop, checkpoints,
//! sweeps and reports.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, Method, MetricsConfig, RewardNormalization};
pub use experiment::{run_experiment, Experiment, RunRecord, RunState};
pub use report::{ComparisonRow, SummaryRow};
pub use sweep::{resume, run_to_dir, sweep, SweepOptions, SweepRun};
