//! Raw (unscaled) feature extraction for queries and plans.

use std::collections::BTreeSet;

use roq_core::{JoinPredicate, JoinType, Operator, PlanTree, QueryGraph, Topology, OPERATOR_COUNT};

use crate::ModelError;

/// Numeric table-node features before the table one-hot.
pub const NODE_NUMERIC: usize = 4;
pub const EDGE_DIM: usize = JoinType::ALL.len() + JoinPredicate::ALL.len() + 2;
pub const GLOBAL_DIM: usize = 3 + Topology::ALL.len();
pub const PLAN_NODE_DIM: usize = OPERATOR_COUNT + 4;

pub fn node_dim(table_vocab: usize) -> usize {
    NODE_NUMERIC + table_vocab
}

fn log10_rows(x: f64) -> f64 {
    x.max(1.0).log10()
}

/// `[log10 cardinality, selectivity, correlation, log10 estimated rows,
/// one-hot table id]` per table.
pub fn node_features(q: &QueryGraph, table_vocab: usize) -> Vec<Vec<f64>> {
    q.nodes
        .iter()
        .map(|t| {
            let mut v = vec![
                log10_rows(t.cardinality),
                t.selectivity,
                t.correlation,
                log10_rows(t.estimated_rows()),
            ];
            let mut hot = vec![0.0; table_vocab];
            hot[t.table_id as usize % table_vocab] = 1.0;
            v.extend(hot);
            v
        })
        .collect()
}

/// `[join type one-hot, predicate one-hot, log10 selectivity, skew]`.
pub fn edge_features(q: &QueryGraph) -> Vec<Vec<f64>> {
    q.edges
        .iter()
        .map(|e| {
            let mut v = vec![0.0; EDGE_DIM];
            v[e.join_type.index()] = 1.0;
            v[JoinType::ALL.len() + e.predicate.index()] = 1.0;
            v[EDGE_DIM - 2] = e.selectivity.max(1e-12).log10();
            v[EDGE_DIM - 1] = e.skew;
            v
        })
        .collect()
}

/// `[table count, join count, has aggregate, topology one-hot]`.
pub fn global_features(q: &QueryGraph) -> Vec<f64> {
    let mut v = vec![0.0; GLOBAL_DIM];
    v[0] = q.globals.table_count as f64;
    v[1] = q.globals.join_count as f64;
    v[2] = if q.globals.has_aggregate { 1.0 } else { 0.0 };
    v[3 + q.globals.topology.index()] = 1.0;
    v
}

/// Independence estimate of the rows produced by joining `tables`.
pub fn estimated_rows(q: &QueryGraph, tables: &BTreeSet<usize>) -> f64 {
    let mut rows: f64 = tables.iter().map(|&t| q.nodes[t].estimated_rows().max(1.0)).product();
    for e in &q.edges {
        if tables.contains(&e.left) && tables.contains(&e.right) {
            rows *= e.selectivity;
        }
    }
    rows.max(1.0)
}

/// Per-node plan features in `plan.nodes` order:
/// `[operator one-hot, log10 rows out, log10 left input, log10 right input,
/// table count]`. Leaves read their table's cardinality as left input.
pub fn plan_node_features(q: &QueryGraph, plan: &PlanTree) -> Result<Vec<Vec<f64>>, ModelError> {
    let n_tables = q.nodes.len();
    for (i, node) in plan.nodes.iter().enumerate() {
        if let Some(&t) = node.tables.iter().find(|&&t| t >= n_tables) {
            return Err(ModelError::UnknownTable {
                node: i,
                table: t,
                tables: n_tables,
            });
        }
        if node.tables.is_empty() {
            return Err(ModelError::UnknownTable {
                node: i,
                table: usize::MAX,
                tables: n_tables,
            });
        }
    }
    let rows: Vec<f64> = plan.nodes.iter().map(|n| estimated_rows(q, &n.tables)).collect();
    Ok(plan
        .nodes
        .iter()
        .map(|n| {
            let mut v = n.operator.one_hot().to_vec();
            let left = match n.left {
                Some(c) => rows[c],
                None => n.tables.iter().map(|&t| q.nodes[t].cardinality).sum(),
            };
            let right = n.right.map_or(0.0, |c| rows[c]);
            let out = match n.operator {
                Operator::GroupAggregate => left,
                _ => estimated_rows(q, &n.tables),
            };
            v.extend([
                log10_rows(out),
                log10_rows(left),
                log10_rows(right),
                n.tables.len() as f64,
            ]);
            v
        })
        .collect())
}
