//! Monte Carlo laboratory: data generation, replicated fits and summary metrics.

pub mod config;
pub mod dgp;
pub mod diagnostics;
pub mod experiment;
pub mod metrics;

pub use dgp::{generate_dataset, Generator, SimConfig};
pub use experiment::{
    map_replications, run_experiment, simulation_noise, EstimatorPlan, ExperimentReport, MetricsRow, Tuned,
};
pub use metrics::{compute_metrics, Metrics};
