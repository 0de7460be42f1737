//! Metrics, experiment suites and report tables behind the `roq` binary.
//!
//! Every report is a CSV file whose first line is a comment with the
//! seed, a hash of the resolved configuration and the table format
//! version. Wall-clock columns can be replaced by `NA` so that reruns are
//! byte-identical.

use thiserror::Error;

pub mod cli;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod output;
pub mod reports;

pub use config::{EvalConfig, LabConfig};
pub use experiments::{
    ablation_cells, agreement, default_cells, evaluate_strategies, predict_queries, run_ablation, run_inference_sweep,
    run_workload_shift, split_ids, worker_count, EvaluatedQuery, ShiftRow, SweepRow,
};
pub use metrics::{
    classify_queries, q_error, spearman, suboptimality, MetricsReport, Outcome, Quantiles, Spearman, StrategyRecord,
    DEFAULT_THRESHOLD,
};
pub use output::{write_atomic, Table, REPORT_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum EvalError {
    /// Bad input or configuration: exit code 1.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Select(#[from] roq_select::SelectError),
    #[error(transparent)]
    Risk(#[from] roq_risk::RiskError),
    #[error(transparent)]
    Bench(#[from] roq_bench::BenchError),
    #[error(transparent)]
    Model(#[from] roq_model::ModelError),
    #[error(transparent)]
    Workload(#[from] roq_core::IoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// 1 for validation failures, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        use roq_model::ModelError as M;
        match self {
            EvalError::Invalid(_) | EvalError::Select(_) | EvalError::Risk(_) | EvalError::Bench(_) => 1,
            EvalError::Workload(roq_core::IoError::Parse { .. } | roq_core::IoError::Version { .. }) => 1,
            EvalError::Model(
                M::Config(_)
                | M::UnknownTable { .. }
                | M::UnknownPlan(_)
                | M::BadLabel(_)
                | M::TooFewSamples(_)
                | M::EmptySplit(_),
            ) => 1,
            _ => 2,
        }
    }
}
