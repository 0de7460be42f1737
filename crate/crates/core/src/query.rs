//! Join-graph representation of a query.

use serde::{Deserialize, Serialize};

/// Per-table record of a join graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableNode {
    /// Base cardinality of the table (rows).
    pub cardinality: f64,
    /// Selectivity of the local predicates, in `[0, 1]`.
    pub selectivity: f64,
    /// Correlation score between predicate columns, in `[0, 1]`.
    pub correlation: f64,
    /// Index into the fixed table catalog.
    pub table_id: u32,
}

impl TableNode {
    /// Rows surviving the local predicates under the independence assumption.
    pub fn estimated_rows(&self) -> f64 {
        self.cardinality * self.selectivity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinType {
    Inner,
    LeftOuter,
    Semi,
    Anti,
}

impl JoinType {
    pub const ALL: [JoinType; 4] = [JoinType::Inner, JoinType::LeftOuter, JoinType::Semi, JoinType::Anti];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinPredicate {
    Eq,
    Less,
    Greater,
    NotEq,
}

impl JoinPredicate {
    pub const ALL: [JoinPredicate; 4] = [
        JoinPredicate::Eq,
        JoinPredicate::Less,
        JoinPredicate::Greater,
        JoinPredicate::NotEq,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A join predicate between two tables of the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: usize,
    pub right: usize,
    pub join_type: JoinType,
    pub predicate: JoinPredicate,
    /// Join selectivity, in `[0, 1]`.
    pub selectivity: f64,
    /// Skew score of the join columns, `>= 0`.
    pub skew: f64,
}

impl JoinEdge {
    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.left == a && self.right == b) || (self.left == b && self.right == a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Chain,
    Star,
    Cycle,
    Clique,
}

impl Topology {
    pub const ALL: [Topology; 4] = [Topology::Chain, Topology::Star, Topology::Cycle, Topology::Clique];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Graph-level attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGlobals {
    pub table_count: usize,
    pub join_count: usize,
    pub topology: Topology,
    /// The query aggregates its join result (a group-aggregate tops every plan).
    #[serde(default)]
    pub has_aggregate: bool,
}

/// Join graph of a query: tables as nodes, join predicates as edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGraph {
    pub nodes: Vec<TableNode>,
    pub edges: Vec<JoinEdge>,
    pub globals: GraphGlobals,
}

impl QueryGraph {
    /// Builds a graph and derives the count globals from `nodes` and `edges`.
    pub fn new(nodes: Vec<TableNode>, edges: Vec<JoinEdge>, topology: Topology) -> Self {
        let globals = GraphGlobals {
            table_count: nodes.len(),
            join_count: edges.len(),
            topology,
            has_aggregate: false,
        };
        Self { nodes, edges, globals }
    }

    pub fn with_aggregate(mut self, has_aggregate: bool) -> Self {
        self.globals.has_aggregate = has_aggregate;
        self
    }

    pub fn table_count(&self) -> usize {
        self.nodes.len()
    }

    /// Edges with at least one endpoint in `a` and the other in `b`.
    pub fn edges_between<'a>(
        &'a self,
        a: &'a std::collections::BTreeSet<usize>,
        b: &'a std::collections::BTreeSet<usize>,
    ) -> impl Iterator<Item = (usize, &'a JoinEdge)> + 'a {
        self.edges.iter().enumerate().filter(move |(_, e)| {
            (a.contains(&e.left) && b.contains(&e.right)) || (a.contains(&e.right) && b.contains(&e.left))
        })
    }

    /// True when every node is reachable from node 0 through valid edges.
    /// Out-of-range edges are ignored.
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                if e.left >= n || e.right >= n {
                    continue;
                }
                let other = if e.left == v {
                    e.right
                } else if e.right == v {
                    e.left
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
