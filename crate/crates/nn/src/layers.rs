//! Neural building blocks on top of [`Graph`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Graph, NnError, ParamId, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    LeakyRelu,
}

/// Negative slope used by [`Activation::LeakyRelu`] and attention scores.
pub const LEAKY_SLOPE: f64 = 0.2;

pub fn activate(g: &mut Graph, x: Var, act: Activation) -> Var {
    match act {
        Activation::Identity => x,
        Activation::Relu => g.relu(x),
        Activation::Sigmoid => g.sigmoid(x),
        Activation::LeakyRelu => g.leaky_relu(x, LEAKY_SLOPE),
    }
}

fn check_cols(g: &Graph, op: &'static str, x: Var, want: usize, out: usize) -> Result<(), NnError> {
    let t = g.value(x);
    if t.cols() != want || t.shape().len() > 2 {
        return Err(NnError::ShapeMismatch {
            op,
            left: t.shape().to_vec(),
            right: vec![want, out],
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            w: store.add_xavier(&format!("{name}.w"), in_dim, out_dim, rng)?,
            b: store.add_zeros(&format!("{name}.b"), vec![out_dim])?,
            in_dim,
            out_dim,
            activation,
        })
    }

    /// `activation(x·W + b)` for `x` of shape `[n, in_dim]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        check_cols(g, "dense", x, self.in_dim, self.out_dim)?;
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let h = g.matmul(x, w)?;
        let h = g.add_bias(h, b)?;
        Ok(activate(g, h, self.activation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutMode {
    Train,
    /// Stochastic masks at inference time; each call draws a fresh mask.
    McInference,
    Deterministic,
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)`.
pub fn dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, mode: DropoutMode, rng: &mut R) -> Result<Var, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::BadRate(rate));
    }
    if rate == 0.0 || mode == DropoutMode::Deterministic {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..g.value(x).len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    g.mask(x, mask)
}

/// Directed arcs over a (possibly batched) set of graphs. Each undirected
/// edge `k` between `a` and `b` contributes arcs `a→b` and `b→a`, both
/// carrying edge feature row `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub edge: Vec<usize>,
    /// Graph index of each node (selects its row of globals).
    pub node_graph: Vec<usize>,
    pub n_graphs: usize,
}

impl Adjacency {
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, NnError> {
        let mut a = Self {
            n_nodes,
            n_edges: edges.len(),
            node_graph: vec![0; n_nodes],
            n_graphs: 1,
            ..Self::default()
        };
        for (k, &(l, r)) in edges.iter().enumerate() {
            for (s, d) in [(l, r), (r, l)] {
                if s >= n_nodes || d >= n_nodes {
                    return Err(NnError::IndexOutOfRange {
                        op: "adjacency",
                        index: s.max(d),
                        len: n_nodes,
                    });
                }
                a.src.push(s);
                a.dst.push(d);
                a.edge.push(k);
            }
        }
        Ok(a)
    }

    /// Disjoint union; node, edge and graph indices are offset in order.
    pub fn batch(parts: &[Adjacency]) -> Self {
        let mut out = Self::default();
        for p in parts {
            let n_off = out.n_nodes;
            out.src.extend(p.src.iter().map(|s| s + n_off));
            out.dst.extend(p.dst.iter().map(|d| d + n_off));
            out.edge.extend(p.edge.iter().map(|e| e + out.n_edges));
            out.node_graph.extend(p.node_graph.iter().map(|g| g + out.n_graphs));
            out.n_nodes += p.n_nodes;
            out.n_graphs += p.n_graphs;
            out.n_edges += p.n_edges;
        }
        out
    }
}

/// Single-head attention message passing with graph-level attributes
/// concatenated onto every node before scoring and messaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphAttention {
    pub w_self: ParamId,
    pub w_msg: ParamId,
    pub w_edge: ParamId,
    pub w_score: ParamId,
    pub b_score: ParamId,
    pub bias: ParamId,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub global_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Output of [`GraphAttention::forward_with_weights`].
#[derive(Debug, Clone, Copy)]
pub struct AttentionOutput {
    pub nodes: Var,
    /// Attention weight per arc, `[arcs, 1]`.
    pub weights: Var,
}

impl GraphAttention {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        node_dim: usize,
        edge_dim: usize,
        global_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let d = node_dim + global_dim;
        Ok(Self {
            w_self: store.add_xavier(&format!("{name}.w_self"), d, out_dim, rng)?,
            w_msg: store.add_xavier(&format!("{name}.w_msg"), d, out_dim, rng)?,
            w_edge: store.add_xavier(&format!("{name}.w_edge"), edge_dim, out_dim, rng)?,
            w_score: store.add_xavier(&format!("{name}.w_score"), 2 * d + edge_dim, 1, rng)?,
            b_score: store.add_zeros(&format!("{name}.b_score"), vec![1])?,
            bias: store.add_zeros(&format!("{name}.bias"), vec![out_dim])?,
            node_dim,
            edge_dim,
            global_dim,
            out_dim,
            activation,
        })
    }

    /// `nodes` is `[N, node_dim]`, `edges` is `[E, edge_dim]`, `globals` is
    /// `[n_graphs, global_dim]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        nodes: Var,
        edges: Var,
        globals: Var,
        adj: &Adjacency,
    ) -> Result<Var, NnError> {
        Ok(self.forward_with_weights(g, store, nodes, edges, globals, adj)?.nodes)
    }

    pub fn forward_with_weights(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        nodes: Var,
        edges: Var,
        globals: Var,
        adj: &Adjacency,
    ) -> Result<AttentionOutput, NnError> {
        check_cols(g, "graph_attention(nodes)", nodes, self.node_dim, self.out_dim)?;
        check_cols(g, "graph_attention(edges)", edges, self.edge_dim, self.out_dim)?;
        check_cols(g, "graph_attention(globals)", globals, self.global_dim, self.out_dim)?;
        if g.value(nodes).rows() != adj.n_nodes || adj.node_graph.len() != adj.n_nodes {
            return Err(NnError::ShapeMismatch {
                op: "graph_attention(adjacency)",
                left: g.value(nodes).shape().to_vec(),
                right: vec![adj.n_nodes],
            });
        }
        let gb = g.gather_rows(globals, &adj.node_graph)?;
        let x = g.concat_cols(&[nodes, gb])?;

        let xi = g.gather_rows(x, &adj.dst)?;
        let xj = g.gather_rows(x, &adj.src)?;
        let ea = g.gather_rows(edges, &adj.edge)?;
        let cat = g.concat_cols(&[xi, xj, ea])?;
        let ws = g.param(store, self.w_score);
        let bs = g.param(store, self.b_score);
        let s = g.matmul(cat, ws)?;
        let s = g.add_bias(s, bs)?;
        let s = g.leaky_relu(s, LEAKY_SLOPE);
        let alpha = g.segment_softmax(s, &adj.dst, adj.n_nodes)?;

        let wm = g.param(store, self.w_msg);
        let we = g.param(store, self.w_edge);
        let m_node = g.matmul(xj, wm)?;
        let m_edge = g.matmul(ea, we)?;
        let msg = g.add(m_node, m_edge)?;
        let msg = g.scale_rows(msg, alpha)?;
        let agg = g.segment_sum(msg, &adj.dst, adj.n_nodes)?;

        let wself = g.param(store, self.w_self);
        let b = g.param(store, self.bias);
        let h = g.matmul(x, wself)?;
        let h = g.add(h, agg)?;
        let h = g.add_bias(h, b)?;
        Ok(AttentionOutput {
            nodes: activate(g, h, self.activation),
            weights: alpha,
        })
    }
}

/// Tree convolution over (node, left child, right child) triples. Missing
/// children read a learned placeholder row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConv {
    pub w_self: ParamId,
    pub w_left: ParamId,
    pub w_right: ParamId,
    pub bias: ParamId,
    pub zero_child: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl TreeConv {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            w_self: store.add_xavier(&format!("{name}.w_self"), in_dim, out_dim, rng)?,
            w_left: store.add_xavier(&format!("{name}.w_left"), in_dim, out_dim, rng)?,
            w_right: store.add_xavier(&format!("{name}.w_right"), in_dim, out_dim, rng)?,
            bias: store.add_zeros(&format!("{name}.bias"), vec![out_dim])?,
            zero_child: store.add_zeros(&format!("{name}.zero_child"), vec![1, in_dim])?,
            in_dim,
            out_dim,
            activation,
        })
    }

    /// `x` is `[M, in_dim]`; `left[i]`/`right[i]` index rows of `x`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        left: &[Option<usize>],
        right: &[Option<usize>],
    ) -> Result<Var, NnError> {
        check_cols(g, "tree_conv", x, self.in_dim, self.out_dim)?;
        let m = g.value(x).rows();
        if left.len() != m || right.len() != m {
            return Err(NnError::ShapeMismatch {
                op: "tree_conv(children)",
                left: vec![m],
                right: vec![left.len(), right.len()],
            });
        }
        let z = g.param(store, self.zero_child);
        let ext = g.concat_rows(&[x, z])?;
        let li: Vec<usize> = left.iter().map(|c| c.unwrap_or(m)).collect();
        let ri: Vec<usize> = right.iter().map(|c| c.unwrap_or(m)).collect();
        let xl = g.gather_rows(ext, &li)?;
        let xr = g.gather_rows(ext, &ri)?;
        let (ws, wl, wr) = (
            g.param(store, self.w_self),
            g.param(store, self.w_left),
            g.param(store, self.w_right),
        );
        let hs = g.matmul(x, ws)?;
        let hl = g.matmul(xl, wl)?;
        let hr = g.matmul(xr, wr)?;
        let h = g.add(hs, hl)?;
        let h = g.add(h, hr)?;
        let b = g.param(store, self.bias);
        let h = g.add_bias(h, b)?;
        Ok(activate(g, h, self.activation))
    }
}

/// Mean ⊕ max over the nodes of each graph: `[n_graphs, 2·d]`.
pub fn readout(g: &mut Graph, x: Var, node_graph: &[usize], n_graphs: usize) -> Result<Var, NnError> {
    let mean = g.segment_mean(x, node_graph, n_graphs)?;
    let max = g.segment_max(x, node_graph, n_graphs)?;
    g.concat_cols(&[mean, max])
}

/// Element-wise max over the nodes of each tree: `[n_trees, d]`.
pub fn dynamic_pool(g: &mut Graph, x: Var, node_tree: &[usize], n_trees: usize) -> Result<Var, NnError> {
    g.segment_max(x, node_tree, n_trees)
}
