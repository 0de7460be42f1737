//! Scaled, cached inputs and their assembly into minibatches.

use roq_core::{PlanTree, QueryGraph};
use roq_nn::{Adjacency, Tensor};

use crate::features::{
    edge_features, global_features, node_dim, node_features, plan_node_features, EDGE_DIM, GLOBAL_DIM, PLAN_NODE_DIM,
};
use crate::preprocess::PreprocessStats;
use crate::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPlan {
    /// `[nodes, PLAN_NODE_DIM]` row-major.
    pub features: Vec<f64>,
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
    /// Query-node indices under each plan node.
    pub tables: Vec<Vec<usize>>,
}

impl EncodedPlan {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuery {
    pub n_nodes: usize,
    pub nodes: Vec<f64>,
    pub edges: Vec<f64>,
    pub globals: Vec<f64>,
    pub adjacency: Adjacency,
    pub plans: Vec<EncodedPlan>,
}

pub fn encode_query(q: &QueryGraph, plans: &[PlanTree], stats: &PreprocessStats) -> Result<EncodedQuery, ModelError> {
    let nodes: Vec<f64> = node_features(q, stats.table_vocab)
        .iter()
        .flat_map(|r| stats.node.transform(r))
        .collect();
    let edges: Vec<f64> = edge_features(q).iter().flat_map(|r| stats.edge.transform(r)).collect();
    let globals = stats.global.transform(&global_features(q));
    let pairs: Vec<(usize, usize)> = q.edges.iter().map(|e| (e.left, e.right)).collect();
    let adjacency = Adjacency::from_edges(q.nodes.len(), &pairs)?;
    let mut encoded = Vec::with_capacity(plans.len());
    for p in plans {
        let features = plan_node_features(q, p)?
            .iter()
            .flat_map(|r| stats.plan.transform(r))
            .collect();
        encoded.push(EncodedPlan {
            features,
            left: p.nodes.iter().map(|n| n.left).collect(),
            right: p.nodes.iter().map(|n| n.right).collect(),
            tables: p.nodes.iter().map(|n| n.tables.iter().copied().collect()).collect(),
        });
    }
    Ok(EncodedQuery {
        n_nodes: q.nodes.len(),
        nodes,
        edges,
        globals,
        adjacency,
        plans: encoded,
    })
}

/// Several query graphs and a subset of each one's plans, flattened.
#[derive(Debug, Clone)]
pub struct Batch {
    pub nodes: Tensor,
    pub edges: Tensor,
    pub globals: Tensor,
    pub adjacency: Adjacency,
    pub plan_nodes: Tensor,
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
    /// `(query node row, plan node row)` pairs for mean-pooling table
    /// embeddings onto plan nodes.
    pub pool_rows: Vec<usize>,
    pub pool_segments: Vec<usize>,
    pub node_tree: Vec<usize>,
    pub tree_graph: Vec<usize>,
    pub n_trees: usize,
}

/// Builds a batch from `(query, plan indices)` pairs. A query listed twice
/// is encoded twice, which is how MC inference draws independent masks in
/// one pass.
pub fn build_batch(items: &[(&EncodedQuery, &[usize])], table_vocab: usize) -> Result<Batch, ModelError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut globals = Vec::new();
    let mut adjs = Vec::with_capacity(items.len());
    let mut plan_nodes = Vec::new();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let (mut pool_rows, mut pool_segments) = (Vec::new(), Vec::new());
    let (mut node_tree, mut tree_graph) = (Vec::new(), Vec::new());
    let mut node_off = 0;
    let mut plan_off = 0;
    for (gi, (q, plan_ids)) in items.iter().enumerate() {
        nodes.extend_from_slice(&q.nodes);
        edges.extend_from_slice(&q.edges);
        globals.extend_from_slice(&q.globals);
        adjs.push(q.adjacency.clone());
        for &pid in plan_ids.iter() {
            let p = q.plans.get(pid).ok_or(ModelError::UnknownPlan(pid))?;
            let tree = tree_graph.len();
            tree_graph.push(gi);
            plan_nodes.extend_from_slice(&p.features);
            for k in 0..p.len() {
                left.push(p.left[k].map(|c| c + plan_off));
                right.push(p.right[k].map(|c| c + plan_off));
                node_tree.push(tree);
                for &t in &p.tables[k] {
                    pool_rows.push(t + node_off);
                    pool_segments.push(k + plan_off);
                }
            }
            plan_off += p.len();
        }
        node_off += q.n_nodes;
    }
    let adjacency = Adjacency::batch(&adjs);
    let n_edges = adjacency.n_edges;
    Ok(Batch {
        nodes: Tensor::matrix(node_off, node_dim(table_vocab), nodes)?,
        edges: Tensor::matrix(n_edges, EDGE_DIM, edges)?,
        globals: Tensor::matrix(items.len(), GLOBAL_DIM, globals)?,
        adjacency,
        plan_nodes: Tensor::matrix(plan_off, PLAN_NODE_DIM, plan_nodes)?,
        left,
        right,
        pool_rows,
        pool_segments,
        node_tree,
        n_trees: tree_graph.len(),
        tree_graph,
    })
}
