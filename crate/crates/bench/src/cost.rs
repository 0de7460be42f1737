//! Analytic operator cost model used both by the simulated optimizer (on
//! estimated cardinalities) and by the execution simulator (on true ones).

use std::collections::BTreeSet;

use roq_core::{JoinType, Operator, PlanTree, QueryGraph};
use serde::{Deserialize, Serialize};

/// Seconds per unit of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub startup: f64,
    pub scan_per_row: f64,
    pub index_per_row: f64,
    pub hash_build_per_row: f64,
    pub hash_probe_per_row: f64,
    /// Build rows beyond which a hash join spills.
    pub hash_memory_rows: f64,
    pub spill_factor: f64,
    pub sort_per_row_log: f64,
    pub merge_per_row: f64,
    pub nl_per_pair: f64,
    pub output_per_row: f64,
    pub agg_per_row: f64,
    /// Output/input row ratio of a group-aggregate.
    pub agg_reduction: f64,
    pub outer_join_factor: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            startup: 1e-3,
            scan_per_row: 1e-7,
            index_per_row: 3e-6,
            hash_build_per_row: 4e-7,
            hash_probe_per_row: 1.5e-7,
            hash_memory_rows: 2e6,
            spill_factor: 3.0,
            sort_per_row_log: 6e-8,
            merge_per_row: 5e-8,
            nl_per_pair: 2e-9,
            output_per_row: 5e-8,
            agg_per_row: 1e-7,
            agg_reduction: 0.05,
            outer_join_factor: 1.15,
        }
    }
}

impl CostConstants {
    /// Multiplies every per-row constant by the matching factor (cycled).
    pub fn perturbed(&self, factors: &[f64]) -> Self {
        let f = |i: usize| factors[i % factors.len()];
        Self {
            startup: self.startup,
            scan_per_row: self.scan_per_row * f(0),
            index_per_row: self.index_per_row * f(1),
            hash_build_per_row: self.hash_build_per_row * f(2),
            hash_probe_per_row: self.hash_probe_per_row * f(3),
            hash_memory_rows: self.hash_memory_rows,
            spill_factor: self.spill_factor,
            sort_per_row_log: self.sort_per_row_log * f(4),
            merge_per_row: self.merge_per_row * f(5),
            nl_per_pair: self.nl_per_pair * f(6),
            output_per_row: self.output_per_row,
            agg_per_row: self.agg_per_row * f(7),
            agg_reduction: self.agg_reduction,
            outer_join_factor: self.outer_join_factor,
        }
    }

    pub fn access_cost(&self, op: Operator, table_rows: f64, out_rows: f64) -> f64 {
        match op {
            Operator::TableScan => self.startup + self.scan_per_row * table_rows,
            Operator::IndexScan => self.startup + self.index_per_row * out_rows,
            _ => unreachable!("not an access operator: {op:?}"),
        }
    }

    /// Local cost of a join with `outer` rows on the left, `inner` rows on
    /// the right (hash build side) and `out` result rows.
    pub fn join_cost(&self, op: Operator, outer: f64, inner: f64, out: f64, outer_join: bool) -> f64 {
        let lg = |r: f64| (r.max(2.0)).log2();
        let base = match op {
            Operator::NestedLoopsJoin => self.nl_per_pair * outer * inner,
            Operator::HashJoin => {
                let build = self.hash_build_per_row * inner;
                let build = if inner > self.hash_memory_rows {
                    build * self.spill_factor
                } else {
                    build
                };
                build + self.hash_probe_per_row * outer
            }
            Operator::MergeJoin => {
                self.sort_per_row_log * (outer * lg(outer) + inner * lg(inner)) + self.merge_per_row * (outer + inner)
            }
            _ => unreachable!("not a join operator: {op:?}"),
        };
        let factor = if outer_join { self.outer_join_factor } else { 1.0 };
        self.startup + factor * (base + self.output_per_row * out)
    }

    pub fn aggregate_cost(&self, input_rows: f64) -> f64 {
        self.startup + self.agg_per_row * input_rows
    }
}

/// Multiplicative corrections applied on top of optimizer estimates.
/// All ones means "estimates are exact".
#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityFactors {
    pub table: Vec<f64>,
    pub edge: Vec<f64>,
}

impl CardinalityFactors {
    pub fn exact(query: &QueryGraph) -> Self {
        Self {
            table: vec![1.0; query.nodes.len()],
            edge: vec![1.0; query.edges.len()],
        }
    }
}

/// Rows produced by a join over exactly `tables`, given per-table filtered
/// rows, with errors compounding over every joined table and edge.
pub fn set_rows(query: &QueryGraph, tables: &BTreeSet<usize>, factors: &CardinalityFactors) -> f64 {
    let mut rows = 1.0;
    for &t in tables {
        rows *= table_rows(query, t, factors);
    }
    for (i, e) in query.edges.iter().enumerate() {
        if tables.contains(&e.left) && tables.contains(&e.right) {
            rows *= e.selectivity * factors.edge[i];
        }
    }
    rows.max(1.0)
}

pub fn table_rows(query: &QueryGraph, t: usize, factors: &CardinalityFactors) -> f64 {
    let node = &query.nodes[t];
    (node.estimated_rows() * factors.table[t]).clamp(1.0, node.cardinality.max(1.0))
}

/// Output rows of every plan node.
pub fn node_rows(
    plan: &PlanTree,
    query: &QueryGraph,
    factors: &CardinalityFactors,
    consts: &CostConstants,
) -> Vec<f64> {
    let mut rows = vec![0.0; plan.nodes.len()];
    for idx in plan.post_order() {
        let node = &plan.nodes[idx];
        rows[idx] = match node.operator {
            Operator::GroupAggregate => {
                let child = node.left.map(|c| rows[c]).unwrap_or(1.0);
                (child * consts.agg_reduction).max(1.0)
            }
            _ => set_rows(query, &node.tables, factors),
        };
    }
    rows
}

fn is_outer(query: &QueryGraph, left: &BTreeSet<usize>, right: &BTreeSet<usize>) -> bool {
    query
        .edges_between(left, right)
        .any(|(_, e)| e.join_type == JoinType::LeftOuter)
}

/// Total cost of a plan for the given per-node output rows.
pub fn plan_cost(plan: &PlanTree, query: &QueryGraph, rows: &[f64], consts: &CostConstants) -> f64 {
    let mut total = 0.0;
    for (idx, node) in plan.nodes.iter().enumerate() {
        total += match node.operator {
            Operator::TableScan | Operator::IndexScan => {
                let t = *node.tables.first().expect("leaf covers one table");
                consts.access_cost(node.operator, query.nodes[t].cardinality, rows[idx])
            }
            Operator::GroupAggregate => consts.aggregate_cost(node.left.map(|c| rows[c]).unwrap_or(1.0)),
            op => {
                let (l, r) = (node.left.expect("join"), node.right.expect("join"));
                let outer = is_outer(query, &plan.nodes[l].tables, &plan.nodes[r].tables);
                consts.join_cost(op, rows[l], rows[r], rows[idx], outer)
            }
        };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use roq_core::{JoinEdge, JoinPredicate, PlanNode, TableNode, Topology};

    fn query() -> QueryGraph {
        let node = |c: f64, s: f64| TableNode {
            cardinality: c,
            selectivity: s,
            correlation: 0.0,
            table_id: 0,
        };
        QueryGraph::new(
            vec![node(1e4, 0.1), node(1e3, 1.0)],
            vec![JoinEdge {
                left: 0,
                right: 1,
                join_type: JoinType::Inner,
                predicate: JoinPredicate::Eq,
                selectivity: 1e-3,
                skew: 0.0,
            }],
            Topology::Chain,
        )
    }

    #[test]
    fn set_rows_multiplies_selectivities() {
        let q = query();
        let f = CardinalityFactors::exact(&q);
        assert_eq!(set_rows(&q, &BTreeSet::from([0]), &f), 1000.0);
        assert_eq!(set_rows(&q, &BTreeSet::from([0, 1]), &f), 1000.0 * 1000.0 * 1e-3);
    }

    #[test]
    fn errors_compound_over_joins() {
        let q = query();
        let f = CardinalityFactors {
            table: vec![2.0, 1.0],
            edge: vec![3.0],
        };
        assert_eq!(set_rows(&q, &BTreeSet::from([0, 1]), &f), 2000.0 * 1000.0 * 3e-3);
    }

    #[test]
    fn nested_loops_cost_is_quadratic() {
        let c = CostConstants::default();
        let small = c.join_cost(Operator::NestedLoopsJoin, 100.0, 100.0, 0.0, false) - c.startup;
        let big = c.join_cost(Operator::NestedLoopsJoin, 1000.0, 1000.0, 0.0, false) - c.startup;
        assert!((big / small - 100.0).abs() < 1e-9);
    }

    #[test]
    fn plan_cost_sums_nodes() {
        let q = query();
        let plan = PlanTree {
            nodes: vec![
                PlanNode::leaf(Operator::TableScan, 0),
                PlanNode::leaf(Operator::TableScan, 1),
                PlanNode {
                    operator: Operator::HashJoin,
                    tables: BTreeSet::from([0, 1]),
                    left: Some(0),
                    right: Some(1),
                },
            ],
            root: 2,
        };
        let c = CostConstants::default();
        let rows = node_rows(&plan, &q, &CardinalityFactors::exact(&q), &c);
        let expected = c.access_cost(Operator::TableScan, 1e4, 1e3)
            + c.access_cost(Operator::TableScan, 1e3, 1e3)
            + c.join_cost(Operator::HashJoin, 1e3, 1e3, 1e3, false);
        assert!((plan_cost(&plan, &q, &rows, &c) - expected).abs() < 1e-15);
    }
}
