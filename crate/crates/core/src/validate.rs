//! Invariant checks for workload samples. Violations are returned as data.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::plan::PlanTree;
use crate::query::QueryGraph;
use crate::workload::WorkloadSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("edge {edge}: edge endpoint out of range")]
    EdgeEndpointOutOfRange { edge: usize },
    #[error("edge {edge}: self-edge on node {node}")]
    SelfEdge { edge: usize, node: usize },
    #[error("query graph is not connected")]
    Disconnected,
    #[error("globals.table_count {declared} != {actual} nodes")]
    TableCountMismatch { declared: usize, actual: usize },
    #[error("globals.join_count {declared} != {actual} edges")]
    JoinCountMismatch { declared: usize, actual: usize },
    #[error("node {node}: {field} out of range ({value})")]
    NodeAttributeOutOfRange {
        node: usize,
        field: &'static str,
        value: f64,
    },
    #[error("edge {edge}: {field} out of range ({value})")]
    EdgeAttributeOutOfRange {
        edge: usize,
        field: &'static str,
        value: f64,
    },
    #[error("query has no tables")]
    EmptyQuery,
    #[error("plan {plan}: empty plan")]
    EmptyPlan { plan: usize },
    #[error("plan {plan}: root index {root} out of range")]
    RootOutOfRange { plan: usize, root: usize },
    #[error("plan {plan} node {node}: child index {child} out of range")]
    ChildOutOfRange { plan: usize, node: usize, child: usize },
    #[error("plan {plan} node {node}: {parents} parents (expected {expected})")]
    ParentCount {
        plan: usize,
        node: usize,
        parents: usize,
        expected: usize,
    },
    #[error("plan {plan} node {node}: unreachable from root")]
    Unreachable { plan: usize, node: usize },
    #[error("plan {plan} node {node}: table set differs from union of children")]
    TableSetMismatch { plan: usize, node: usize },
    #[error("plan {plan} node {node}: leaf is not an access operator over exactly one table")]
    BadLeaf { plan: usize, node: usize },
    #[error("plan {plan} node {node}: {operator:?} has wrong arity")]
    BadArity {
        plan: usize,
        node: usize,
        operator: crate::plan::Operator,
    },
    #[error("plan {plan} node {node}: table index {table} not in query")]
    TableOutOfRange { plan: usize, node: usize, table: usize },
    #[error("plan {plan}: root table set incomplete")]
    RootTableSetIncomplete { plan: usize },
    #[error("sample has no plans")]
    NoPlans,
    #[error("{plans} plans but {labels} labels")]
    LabelCountMismatch { plans: usize, labels: usize },
    #[error("label {label}: execution time must be finite and > 0 ({value})")]
    NonPositiveTime { label: usize, value: f64 },
    #[error("label {label}: timed-out time {value} is not a whole-second threshold")]
    BadTimeoutThreshold { label: usize, value: f64 },
    #[error("label 0: first execution can not time out")]
    FirstLabelTimedOut,
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

pub fn validate_query(query: &QueryGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = query.nodes.len();
    if n == 0 {
        out.push(Violation::EmptyQuery);
    }
    for (i, node) in query.nodes.iter().enumerate() {
        if !(node.cardinality >= 0.0 && node.cardinality.is_finite()) {
            out.push(Violation::NodeAttributeOutOfRange {
                node: i,
                field: "cardinality",
                value: node.cardinality,
            });
        }
        if !in_unit(node.selectivity) {
            out.push(Violation::NodeAttributeOutOfRange {
                node: i,
                field: "selectivity",
                value: node.selectivity,
            });
        }
        if !in_unit(node.correlation) {
            out.push(Violation::NodeAttributeOutOfRange {
                node: i,
                field: "correlation",
                value: node.correlation,
            });
        }
    }
    for (i, edge) in query.edges.iter().enumerate() {
        if edge.left >= n || edge.right >= n {
            out.push(Violation::EdgeEndpointOutOfRange { edge: i });
        } else if edge.left == edge.right {
            out.push(Violation::SelfEdge {
                edge: i,
                node: edge.left,
            });
        }
        if !in_unit(edge.selectivity) {
            out.push(Violation::EdgeAttributeOutOfRange {
                edge: i,
                field: "selectivity",
                value: edge.selectivity,
            });
        }
        if !(edge.skew >= 0.0 && edge.skew.is_finite()) {
            out.push(Violation::EdgeAttributeOutOfRange {
                edge: i,
                field: "skew",
                value: edge.skew,
            });
        }
    }
    if !query.is_connected() {
        out.push(Violation::Disconnected);
    }
    if query.globals.table_count != n {
        out.push(Violation::TableCountMismatch {
            declared: query.globals.table_count,
            actual: n,
        });
    }
    if query.globals.join_count != query.edges.len() {
        out.push(Violation::JoinCountMismatch {
            declared: query.globals.join_count,
            actual: query.edges.len(),
        });
    }
    out
}

/// Checks one plan against the shape invariants and against `query`.
/// `plan_index` only labels the reported violations.
pub fn validate_plan(plan: &PlanTree, plan_index: usize, query: &QueryGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = plan.nodes.len();
    if m == 0 {
        out.push(Violation::EmptyPlan { plan: plan_index });
        return out;
    }
    if plan.root >= m {
        out.push(Violation::RootOutOfRange {
            plan: plan_index,
            root: plan.root,
        });
        return out;
    }

    let mut parents = vec![0usize; m];
    let mut children_ok = true;
    for (i, node) in plan.nodes.iter().enumerate() {
        for child in [node.left, node.right].into_iter().flatten() {
            if child >= m {
                children_ok = false;
                out.push(Violation::ChildOutOfRange {
                    plan: plan_index,
                    node: i,
                    child,
                });
            } else {
                parents[child] += 1;
            }
        }
        for &t in &node.tables {
            if t >= query.nodes.len() {
                out.push(Violation::TableOutOfRange {
                    plan: plan_index,
                    node: i,
                    table: t,
                });
            }
        }
        let arity_ok = if node.operator.is_access() {
            node.is_leaf()
        } else if node.operator.is_join() {
            node.left.is_some() && node.right.is_some()
        } else {
            node.left.is_some() && node.right.is_none()
        };
        if node.is_leaf() {
            if !(node.operator.is_access() && node.tables.len() == 1) {
                out.push(Violation::BadLeaf {
                    plan: plan_index,
                    node: i,
                });
            }
        } else if !arity_ok {
            out.push(Violation::BadArity {
                plan: plan_index,
                node: i,
                operator: node.operator,
            });
        }
    }
    for (i, &p) in parents.iter().enumerate() {
        let expected = usize::from(i != plan.root);
        if p != expected {
            out.push(Violation::ParentCount {
                plan: plan_index,
                node: i,
                parents: p,
                expected,
            });
        }
    }
    if !children_ok {
        return out;
    }

    // Reachability from the root; a visited guard stops cycles.
    let mut seen = vec![false; m];
    let mut stack = vec![plan.root];
    while let Some(v) = stack.pop() {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        let node = &plan.nodes[v];
        stack.extend([node.left, node.right].into_iter().flatten());
    }
    for (i, s) in seen.iter().enumerate() {
        if !s {
            out.push(Violation::Unreachable {
                plan: plan_index,
                node: i,
            });
        }
    }

    for (i, node) in plan.nodes.iter().enumerate() {
        if node.is_leaf() {
            continue;
        }
        let mut union = BTreeSet::new();
        for child in [node.left, node.right].into_iter().flatten() {
            union.extend(plan.nodes[child].tables.iter().copied());
        }
        if union != node.tables {
            out.push(Violation::TableSetMismatch {
                plan: plan_index,
                node: i,
            });
        }
    }

    let all: BTreeSet<usize> = (0..query.nodes.len()).collect();
    if plan.nodes[plan.root].tables != all {
        out.push(Violation::RootTableSetIncomplete { plan: plan_index });
    }
    out
}

/// Returns every violated invariant, or `Ok(())` when the sample is valid.
pub fn validate(sample: &WorkloadSample) -> Result<(), Vec<Violation>> {
    let mut out = validate_query(&sample.query);
    if sample.plans.is_empty() {
        out.push(Violation::NoPlans);
    }
    for (i, plan) in sample.plans.iter().enumerate() {
        out.extend(validate_plan(plan, i, &sample.query));
    }
    if sample.plans.len() != sample.labels.len() {
        out.push(Violation::LabelCountMismatch {
            plans: sample.plans.len(),
            labels: sample.labels.len(),
        });
    }
    for (i, label) in sample.labels.iter().enumerate() {
        let t = label.execution_time;
        if !(t > 0.0 && t.is_finite()) {
            out.push(Violation::NonPositiveTime { label: i, value: t });
        } else if label.timed_out && t.fract() != 0.0 {
            out.push(Violation::BadTimeoutThreshold { label: i, value: t });
        }
    }
    if sample.labels.first().is_some_and(|l| l.timed_out) {
        out.push(Violation::FirstLabelTimedOut);
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Operator, PlanNode};
    use crate::query::{JoinEdge, JoinPredicate, JoinType, TableNode, Topology};
    use crate::workload::{Label, Split};

    fn chain2() -> WorkloadSample {
        let nodes = vec![
            TableNode {
                cardinality: 1000.0,
                selectivity: 0.5,
                correlation: 0.1,
                table_id: 3,
            },
            TableNode {
                cardinality: 50.0,
                selectivity: 1.0,
                correlation: 0.0,
                table_id: 7,
            },
        ];
        let edges = vec![JoinEdge {
            left: 0,
            right: 1,
            join_type: JoinType::Inner,
            predicate: JoinPredicate::Eq,
            selectivity: 0.02,
            skew: 0.3,
        }];
        let query = QueryGraph::new(nodes, edges, Topology::Chain);
        let join = |op| PlanTree {
            nodes: vec![
                PlanNode::leaf(Operator::TableScan, 0),
                PlanNode::leaf(Operator::IndexScan, 1),
                PlanNode {
                    operator: op,
                    tables: BTreeSet::from([0, 1]),
                    left: Some(0),
                    right: Some(1),
                },
            ],
            root: 2,
        };
        WorkloadSample {
            query,
            plans: vec![join(Operator::HashJoin), join(Operator::NestedLoopsJoin)],
            labels: vec![Label::completed(0.4), Label::completed(1.2)],
            split: Split::Train,
            template_id: 0,
        }
    }

    #[test]
    fn well_formed_chain_is_ok() {
        assert_eq!(validate(&chain2()), Ok(()));
    }

    #[test]
    fn incomplete_root_is_reported() {
        let mut s = chain2();
        // Root becomes the single scan over table 0.
        s.plans[0] = PlanTree {
            nodes: vec![PlanNode::leaf(Operator::TableScan, 0)],
            root: 0,
        };
        let errs = validate(&s).unwrap_err();
        assert!(errs.iter().any(|v| v.to_string().contains("root table set incomplete")));
    }

    #[test]
    fn edge_endpoint_out_of_range_is_reported() {
        let mut s = chain2();
        s.query.edges[0].right = 2;
        let errs = validate(&s).unwrap_err();
        assert!(errs
            .iter()
            .any(|v| v.to_string().contains("edge endpoint out of range")));
    }

    #[test]
    fn aggregate_with_single_child_is_valid() {
        let mut s = chain2();
        let plan = &mut s.plans[0];
        plan.nodes.push(PlanNode {
            operator: Operator::GroupAggregate,
            tables: BTreeSet::from([0, 1]),
            left: Some(2),
            right: None,
        });
        plan.root = 3;
        assert_eq!(validate(&s), Ok(()));
    }

    #[test]
    fn cycle_in_plan_is_reported() {
        let mut s = chain2();
        s.plans[0].nodes[0].left = Some(2);
        s.plans[0].nodes[0].operator = Operator::GroupAggregate;
        assert!(validate(&s).is_err());
    }
}
