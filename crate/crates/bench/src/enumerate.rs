//! Candidate plan generation: a greedy cheapest-pair-first optimizer re-run
//! under operator-disabling hint sets.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use roq_core::{JoinPredicate, Operator, PlanNode, PlanTree, QueryGraph};

use crate::cost::{set_rows, CardinalityFactors, CostConstants};

use Operator::{HashJoin as HSJN, IndexScan as ISCAN, MergeJoin as MGJN, NestedLoopsJoin as NLJN};

/// Operators disabled by each hint set, in application order.
pub const HINT_SETS: [&[Operator]; 12] = [
    &[NLJN],
    &[NLJN, ISCAN],
    &[HSJN],
    &[HSJN, ISCAN],
    &[MGJN],
    &[MGJN, ISCAN],
    &[NLJN, MGJN],
    &[NLJN, MGJN, ISCAN],
    &[NLJN, HSJN],
    &[NLJN, HSJN, ISCAN],
    &[MGJN, HSJN],
    &[MGJN, HSJN, ISCAN],
];

/// Log-scale spread of the optimizer's cost constants around the true ones.
const OPTIMIZER_JITTER: f64 = 0.25;

/// Cost constants the simulated optimizer believes in for this seed.
pub fn optimizer_constants(seed: u64) -> CostConstants {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, OPTIMIZER_JITTER).expect("positive std");
    let factors: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng).exp()).collect();
    CostConstants::default().perturbed(&factors)
}

/// Default plan followed by one plan per hint set, structural duplicates
/// removed. Hint sets under which no plan exists are skipped.
pub fn enumerate_plans(query: &QueryGraph, seed: u64) -> Vec<PlanTree> {
    let consts = optimizer_constants(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let disabled_sets = std::iter::once(&[][..]).chain(HINT_SETS.iter().copied());
    for disabled in disabled_sets {
        let allowed: BTreeSet<Operator> = Operator::ALL.into_iter().filter(|op| !disabled.contains(op)).collect();
        if let Some(plan) = optimize(query, &allowed, &consts) {
            if seen.insert(plan.canonical_key()) {
                out.push(plan);
            }
        }
    }
    out
}

fn supports(op: Operator, predicates: &[JoinPredicate]) -> bool {
    match op {
        Operator::NestedLoopsJoin => true,
        Operator::HashJoin => predicates.contains(&JoinPredicate::Eq),
        Operator::MergeJoin => predicates.iter().any(|p| *p != JoinPredicate::NotEq),
        _ => false,
    }
}

struct Component {
    root: usize,
    cost: f64,
    rows: f64,
}

/// Greedy bottom-up optimizer on estimated cardinalities. Returns `None`
/// when the allowed operators cannot join the query.
pub fn optimize(query: &QueryGraph, allowed: &BTreeSet<Operator>, consts: &CostConstants) -> Option<PlanTree> {
    let est = CardinalityFactors::exact(query);
    let mut nodes: Vec<PlanNode> = Vec::new();
    let mut comps: Vec<Component> = Vec::new();
    for (t, table) in query.nodes.iter().enumerate() {
        let rows = set_rows(query, &BTreeSet::from([t]), &est);
        let mut best: Option<(Operator, f64)> = None;
        for op in [Operator::TableScan, Operator::IndexScan] {
            if !allowed.contains(&op) {
                continue;
            }
            let c = consts.access_cost(op, table.cardinality, rows);
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((op, c));
            }
        }
        let (op, cost) = best?;
        nodes.push(PlanNode::leaf(op, t));
        comps.push(Component {
            root: nodes.len() - 1,
            cost,
            rows,
        });
    }
    let joins: Vec<Operator> = Operator::JOINS.into_iter().filter(|op| allowed.contains(op)).collect();

    while comps.len() > 1 {
        // (total cost, outer comp, inner comp, operator, output rows)
        let mut best: Option<(f64, usize, usize, Operator, f64)> = None;
        for i in 0..comps.len() {
            for j in 0..comps.len() {
                if i == j {
                    continue;
                }
                let (ti, tj) = (&nodes[comps[i].root].tables, &nodes[comps[j].root].tables);
                let edges: Vec<_> = query.edges_between(ti, tj).map(|(_, e)| e).collect();
                if edges.is_empty() {
                    continue;
                }
                let predicates: Vec<JoinPredicate> = edges.iter().map(|e| e.predicate).collect();
                let outer_join = edges.iter().any(|e| e.join_type == roq_core::JoinType::LeftOuter);
                let union: BTreeSet<usize> = ti.union(tj).copied().collect();
                let out_rows = set_rows(query, &union, &est);
                for &op in &joins {
                    if !supports(op, &predicates) {
                        continue;
                    }
                    let local = consts.join_cost(op, comps[i].rows, comps[j].rows, out_rows, outer_join);
                    let total = comps[i].cost + comps[j].cost + local;
                    if best.is_none_or(|b| total < b.0) {
                        best = Some((total, i, j, op, out_rows));
                    }
                }
            }
        }
        let (cost, i, j, op, rows) = best?;
        let tables = nodes[comps[i].root]
            .tables
            .union(&nodes[comps[j].root].tables)
            .copied()
            .collect();
        nodes.push(PlanNode {
            operator: op,
            tables,
            left: Some(comps[i].root),
            right: Some(comps[j].root),
        });
        let merged = Component {
            root: nodes.len() - 1,
            cost,
            rows,
        };
        let (hi, lo) = (i.max(j), i.min(j));
        comps.remove(hi);
        comps[lo] = merged;
    }
    let mut root = comps.first()?.root;
    if query.globals.has_aggregate && allowed.contains(&Operator::GroupAggregate) {
        nodes.push(PlanNode {
            operator: Operator::GroupAggregate,
            tables: nodes[root].tables.clone(),
            left: Some(root),
            right: None,
        });
        root = nodes.len() - 1;
    }
    Some(PlanTree { nodes, root })
}

/// Random connected query used by tests and property checks.
pub fn random_chain_query<R: Rng>(rng: &mut R, n: usize) -> QueryGraph {
    let nodes: Vec<roq_core::TableNode> = (0..n)
        .map(|i| roq_core::TableNode {
            cardinality: 10f64.powf(rng.random_range(3.0..7.0)).round(),
            selectivity: 10f64.powf(rng.random_range(-3.0..0.0)),
            correlation: rng.random_range(0.0..1.0),
            table_id: i as u32,
        })
        .collect();
    let edges = (1..n)
        .map(|i| {
            let card = nodes[i - 1].cardinality.max(nodes[i].cardinality);
            roq_core::JoinEdge {
                left: i - 1,
                right: i,
                join_type: roq_core::JoinType::Inner,
                predicate: JoinPredicate::Eq,
                selectivity: (rng.random_range(0.5..5.0) / card).min(1.0),
                skew: rng.random_range(0.0..1.0),
            }
        })
        .collect();
    QueryGraph::new(nodes, edges, roq_core::Topology::Chain)
}
