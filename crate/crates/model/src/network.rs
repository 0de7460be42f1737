//! Query encoder, plan encoder and the two-branch estimator.

use rand::Rng;
use roq_nn::{
    dropout, dynamic_pool, readout, Activation, Dense, DropoutMode, Graph, GraphAttention, NnError, ParamStore,
    TreeConv, Var,
};

use crate::config::ModelConfig;
use crate::encode::Batch;
use crate::features::{node_dim, EDGE_DIM, GLOBAL_DIM, PLAN_NODE_DIM};

/// Starting log-variance. Transformed labels live in [0, 1], so a unit
/// variance would swamp the mean gradient early on.
pub const INITIAL_LOG_VARIANCE: f64 = -4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub attention: Vec<GraphAttention>,
    pub tree: Vec<TreeConv>,
    pub shared: Dense,
    pub mu_hidden: Dense,
    pub mu_out: Dense,
    pub var_hidden: Dense,
    pub var_out: Dense,
    pub dropout: f64,
}

impl Network {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self, NnError> {
        let h = cfg.hidden;
        let act = Activation::LeakyRelu;
        let mut attention = Vec::with_capacity(cfg.graph_layers);
        for l in 0..cfg.graph_layers {
            let input = if l == 0 { node_dim(cfg.table_vocab) } else { h };
            attention.push(GraphAttention::new(
                store,
                &format!("query.gat{l}"),
                input,
                EDGE_DIM,
                GLOBAL_DIM,
                h,
                act,
                rng,
            )?);
        }
        let mut tree = Vec::with_capacity(cfg.tree_layers);
        for l in 0..cfg.tree_layers {
            let input = if l == 0 { PLAN_NODE_DIM + h } else { h };
            tree.push(TreeConv::new(store, &format!("plan.conv{l}"), input, h, act, rng)?);
        }
        let half = (h / 2).max(1);
        let shared = Dense::new(store, "head.shared", 3 * h, h, act, rng)?;
        let mu_hidden = Dense::new(store, "head.mu0", h, half, act, rng)?;
        let mu_out = Dense::new(store, "head.mu1", half, 1, Activation::Sigmoid, rng)?;
        let var_hidden = Dense::new(store, "head.var0", h, half, act, rng)?;
        let var_out = Dense::new(store, "head.var1", half, 1, Activation::Identity, rng)?;
        store.get_mut(var_out.b).value.values_mut()[0] = INITIAL_LOG_VARIANCE;
        Ok(Self {
            attention,
            tree,
            shared,
            mu_hidden,
            mu_out,
            var_hidden,
            var_out,
            dropout: cfg.dropout,
        })
    }

    /// Returns `(μ, ln σ²)`, each `[n_trees, 1]`, in transformed label space.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        mode: DropoutMode,
        rng: &mut R,
    ) -> Result<(Var, Var), NnError> {
        let rate = self.dropout;
        let mut x = g.input(batch.nodes.clone());
        let edges = g.input(batch.edges.clone());
        let globals = g.input(batch.globals.clone());
        for layer in &self.attention {
            x = layer.forward(g, store, x, edges, globals, &batch.adjacency)?;
            x = dropout(g, x, rate, mode, rng)?;
        }
        let query = readout(g, x, &batch.adjacency.node_graph, batch.adjacency.n_graphs)?;

        let m = batch.left.len();
        let per_table = g.gather_rows(x, &batch.pool_rows)?;
        let pooled = g.segment_mean(per_table, &batch.pool_segments, m)?;
        let plan_in = g.input(batch.plan_nodes.clone());
        let mut p = g.concat_cols(&[plan_in, pooled])?;
        for layer in &self.tree {
            p = layer.forward(g, store, p, &batch.left, &batch.right)?;
            p = dropout(g, p, rate, mode, rng)?;
        }
        let plan = dynamic_pool(g, p, &batch.node_tree, batch.n_trees)?;

        let q = g.gather_rows(query, &batch.tree_graph)?;
        let z = g.concat_cols(&[q, plan])?;
        let z = self.shared.forward(g, store, z)?;
        let z = dropout(g, z, rate, mode, rng)?;

        let a = self.mu_hidden.forward(g, store, z)?;
        let a = dropout(g, a, rate, mode, rng)?;
        let mu = self.mu_out.forward(g, store, a)?;

        let b = self.var_hidden.forward(g, store, z)?;
        let b = dropout(g, b, rate, mode, rng)?;
        let log_var = self.var_out.forward(g, store, b)?;
        Ok((mu, log_var))
    }
}
