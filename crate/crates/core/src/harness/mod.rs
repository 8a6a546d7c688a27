//! Experiment orchestration: configuration, seeded replications, metrics,
//! persistence of runs and plot-ready reports.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod persist;
pub mod report;

pub use config::{Experiment, RunConfig};
pub use experiment::{run_experiment, run_replication, ExperimentOutput, Replication};
pub use metrics::{compute_gv, compute_mse, MetricsRow};
pub use report::{report, Report};
