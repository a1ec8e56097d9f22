//! Desk-scale training experiments for the `rootopt` optimizers.
//!
//! Synthetic tasks with verified gradients, seeded spike injection, per-step
//! run logs, multi-seed optimizer comparisons and gradient distribution
//! statistics.

pub mod experiment;
pub mod noise;
pub mod runlog;
pub mod stats;
pub mod tasks;

pub use experiment::{
    compare_optimizers, run_experiment, run_observed, run_with_options, BenchError, Comparison, ComparisonRow, NamedConfig,
    Precision, RunOptions, RunResult, StepView,
};
pub use noise::NoiseInjector;
pub use runlog::{RunLog, RunSummary, StepRecord, DIVERGENCE_LIMIT};
pub use stats::{gradient_stats, DistributionReport};
pub use tasks::{SyntheticTask, TaskKind, TaskShape, TaskSpec};
