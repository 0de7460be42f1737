//! Synthetic optimizer workbench.
//!
//! Queries are drawn from structural templates over a fixed catalog. A
//! greedy optimizer produces a default plan plus hint-set variants on
//! estimated cardinalities; ground-truth times come from the same analytic
//! cost model evaluated on log-normally perturbed cardinalities plus
//! plan-dependent noise. [`pcf`] holds the linear cost-function variance
//! decomposition used as an uncertainty oracle.

use thiserror::Error;

pub mod catalog;
pub mod cost;
pub mod enumerate;
pub mod generate;
pub mod hetero;
pub mod pcf;
pub mod simulate;

pub use catalog::{Catalog, QueryTemplate};
pub use cost::{CardinalityFactors, CostConstants};
pub use enumerate::{enumerate_plans, HINT_SETS};
pub use generate::{generate_with_config, generate_workload, ErrorModel, GeneratorConfig};
pub use hetero::{generate_two_group, TwoGroupConfig, TwoGroupWorkload, GROUP_CORRELATION};
pub use pcf::{
    decompose_variance_closed_form, decompose_variance_monte_carlo, LinearPcf, MonteCarloDecomposition,
    VarianceDecomposition, MIN_MONTE_CARLO_SAMPLES,
};
pub use simulate::{apply_timeout, simulate_execution, PlanCostProfile};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("invalid cost function: {0}")]
    InvalidPcf(String),
    #[error("invalid plan profile: {0}")]
    InvalidProfile(String),
    #[error("{requested} samples requested, at least {minimum} required")]
    TooFewSamples { requested: usize, minimum: usize },
    #[error("configuration error: {0}")]
    Config(String),
}
