//! Physical plan trees.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Width of the operator one-hot encoding.
pub const OPERATOR_COUNT: usize = 6;

/// Fixed operator catalog. The discriminant is the one-hot position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    TableScan,
    IndexScan,
    NestedLoopsJoin,
    HashJoin,
    MergeJoin,
    GroupAggregate,
}

impl Operator {
    pub const ALL: [Operator; OPERATOR_COUNT] = [
        Operator::TableScan,
        Operator::IndexScan,
        Operator::NestedLoopsJoin,
        Operator::HashJoin,
        Operator::MergeJoin,
        Operator::GroupAggregate,
    ];

    pub const JOINS: [Operator; 3] = [Operator::NestedLoopsJoin, Operator::HashJoin, Operator::MergeJoin];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_access(self) -> bool {
        matches!(self, Operator::TableScan | Operator::IndexScan)
    }

    pub fn is_join(self) -> bool {
        matches!(
            self,
            Operator::NestedLoopsJoin | Operator::HashJoin | Operator::MergeJoin
        )
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Operator::GroupAggregate)
    }

    pub fn one_hot(self) -> [f64; OPERATOR_COUNT] {
        let mut v = [0.0; OPERATOR_COUNT];
        v[self.index()] = 1.0;
        v
    }

    /// Short mnemonic used in canonical plan strings.
    pub fn mnemonic(self) -> &'static str {
        match self {
            Operator::TableScan => "tbscan",
            Operator::IndexScan => "iscan",
            Operator::NestedLoopsJoin => "nljn",
            Operator::HashJoin => "hsjn",
            Operator::MergeJoin => "mgjn",
            Operator::GroupAggregate => "grpby",
        }
    }
}

/// One operator of a plan tree. `tables` holds indices into the query's
/// node list covered by the subtree rooted here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub operator: Operator,
    pub tables: BTreeSet<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl PlanNode {
    pub fn leaf(operator: Operator, table: usize) -> Self {
        Self {
            operator,
            tables: BTreeSet::from([table]),
            left: None,
            right: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

/// Binary operator tree. Unary operators keep their input as `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    pub nodes: Vec<PlanNode>,
    pub root: usize,
}

impl PlanTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_node(&self) -> &PlanNode {
        &self.nodes[self.root]
    }

    /// Node indices in post-order (children before parents). Assumes a
    /// well-formed tree.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((idx, expanded)) = stack.pop() {
            if expanded {
                out.push(idx);
                continue;
            }
            stack.push((idx, true));
            let node = &self.nodes[idx];
            if let Some(r) = node.right {
                stack.push((r, false));
            }
            if let Some(l) = node.left {
                stack.push((l, false));
            }
        }
        out
    }

    pub fn count_operator(&self, op: Operator) -> usize {
        self.nodes.iter().filter(|n| n.operator == op).count()
    }

    /// Structural fingerprint: two plans with equal keys are the same plan
    /// regardless of node numbering.
    pub fn canonical_key(&self) -> String {
        fn walk(plan: &PlanTree, idx: usize, out: &mut String) {
            let node = &plan.nodes[idx];
            out.push_str(node.operator.mnemonic());
            if node.is_leaf() {
                for t in &node.tables {
                    let _ = write!(out, "[{t}]");
                }
                return;
            }
            out.push('(');
            if let Some(l) = node.left {
                walk(plan, l, out);
            }
            if let Some(r) = node.right {
                out.push(',');
                walk(plan, r, out);
            }
            out.push(')');
        }
        let mut s = String::new();
        if self.root < self.nodes.len() {
            walk(self, self.root, &mut s);
        }
        s
    }
}
