use serde::{Deserialize, Serialize};

use crate::plan::PlanTree;
use crate::query::QueryGraph;

/// Measured (or simulated) execution of one plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// Seconds. For a timed-out run this is the timeout threshold.
    pub execution_time: f64,
    pub timed_out: bool,
}

impl Label {
    pub fn completed(execution_time: f64) -> Self {
        Self {
            execution_time,
            timed_out: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// A query with its candidate plans and one label per plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSample {
    pub query: QueryGraph,
    pub plans: Vec<PlanTree>,
    pub labels: Vec<Label>,
    pub split: Split,
    pub template_id: u32,
}

impl WorkloadSample {
    pub fn times(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.execution_time).collect()
    }

    /// Index of the fastest plan, lowest index on ties.
    pub fn best_plan(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.labels.iter().enumerate() {
            if l.execution_time < self.labels[best].execution_time {
                best = i;
            }
        }
        best
    }
}
