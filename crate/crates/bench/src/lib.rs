//! Experiment harness for `distquad`: accuracy-vs-tolerance sweeps, scaling
//! over worker counts and per-rank compute/idle breakdowns, written as CSV
//! with a JSON manifest.

pub mod experiments;
pub mod output;
pub mod spec;

pub use experiments::{
    run_accuracy_sweep, run_idle_breakdown, run_scaling_sweep, AccuracyRow, IdleRow, ScalingRow,
};
pub use spec::{BackendId, ExperimentSpec, FunctionId, RuleId};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Quad(#[from] distquad::QuadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
