//! Shared domain model for risk-aware query plan evaluation.
//!
//! Queries exist only as join graphs ([`QueryGraph`]); candidate plans are
//! binary operator trees ([`PlanTree`]); predictions are
//! [`CostDistribution`]s; the unit of training and evaluation is a
//! [`WorkloadSample`]. Workloads are persisted as newline-delimited JSON,
//! see [`io`].

pub mod cost;
pub mod io;
pub mod plan;
pub mod query;
pub mod seed;
pub mod validate;
pub mod workload;

pub use cost::CostDistribution;
pub use io::{
    deserialize_workload, read_workload_file, serialize_workload, write_workload_file, IoError, FORMAT_VERSION,
};
pub use plan::{Operator, PlanNode, PlanTree, OPERATOR_COUNT};
pub use query::{GraphGlobals, JoinEdge, JoinPredicate, JoinType, QueryGraph, TableNode, Topology};
pub use seed::derive_seed;
pub use validate::{validate, validate_plan, validate_query, Violation};
pub use workload::{Label, Split, WorkloadSample};

/// Number of tables in the default synthetic catalog.
pub const DEFAULT_CATALOG_SIZE: usize = 24;
