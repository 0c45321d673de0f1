//! Dataset loading, experiment orchestration and correctness metrics.

mod dataset;
mod experiment;
pub mod metrics;

pub use dataset::{load_dataset, DatasetError};
pub use experiment::{
    experiment_dir, run_experiment, trace_file_name, ClaimOutcome, ExperimentConfig, ExperimentError, ExperimentOutput,
    ExperimentReport, FactChecker, ProviderSpec, RunOptions, Stores,
};
pub use metrics::{evaluate, render_table, Confusion, EvalError, FailedCounts, MetricsReport, PerClass};
