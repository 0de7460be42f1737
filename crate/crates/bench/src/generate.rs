//! Workload generation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use roq_core::{derive_seed, JoinEdge, QueryGraph, Split, TableNode, WorkloadSample};
use serde::{Deserialize, Serialize};

use crate::catalog::{generate_templates, Catalog, QueryTemplate};
use crate::cost::{node_rows, CardinalityFactors, CostConstants};
use crate::enumerate::enumerate_plans;
use crate::simulate::{apply_timeout, simulate_execution, PlanCostProfile};
use crate::BenchError;

/// Seed streams derived from a query seed.
const STREAM_PLANS: u64 = 1;
const STREAM_ERRORS: u64 = 2;
const STREAM_RUN: u64 = 1000;
/// Stream of the master seed used for split assignment.
const STREAM_SPLIT: u64 = u64::MAX;
/// Stream of the master seed used for templates.
const STREAM_TEMPLATES: u64 = u64::MAX - 1;

/// Log-normal cardinality error: `ln factor ~ N(bias * s, (floor + scale * s)^2)`
/// where `s` is the table correlation or the edge skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    pub bias: f64,
    pub floor: f64,
    pub scale: f64,
}

impl ErrorModel {
    fn normal(&self, s: f64) -> Normal<f64> {
        Normal::new(self.bias * s, self.floor + self.scale * s).expect("non-negative std")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_queries: usize,
    pub n_templates: usize,
    pub catalog_size: usize,
    /// Train, validation, test.
    pub split_ratios: [f64; 3],
    /// Run-to-run noise std as a fraction of base cost, for plans without
    /// and with only nested-loops joins.
    pub noise_range: [f64; 2],
    pub table_error: ErrorModel,
    pub edge_error: ErrorModel,
    pub timeout: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_queries: 1000,
            n_templates: 15,
            catalog_size: roq_core::DEFAULT_CATALOG_SIZE,
            split_ratios: [0.8, 0.1, 0.1],
            noise_range: [0.05, 0.3],
            table_error: ErrorModel {
                bias: 1.0,
                floor: 0.1,
                scale: 1.0,
            },
            edge_error: ErrorModel {
                bias: 0.5,
                floor: 0.05,
                scale: 0.5,
            },
            timeout: true,
        }
    }
}

impl GeneratorConfig {
    pub fn check(&self) -> Result<(), BenchError> {
        if self.n_queries == 0 || self.n_templates == 0 {
            return Err(BenchError::Config("n_queries and n_templates must be >= 1".into()));
        }
        let r = self.split_ratios;
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BenchError::Config(format!(
                "split_ratios {r:?} must be in [0,1] and sum to 1"
            )));
        }
        let [lo, hi] = self.noise_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(BenchError::Config(format!(
                "noise_range {:?} must satisfy 0 <= lo <= hi",
                self.noise_range
            )));
        }
        for e in [self.table_error, self.edge_error] {
            if !(e.floor >= 0.0 && e.scale >= 0.0 && e.bias.is_finite()) {
                return Err(BenchError::Config(format!("bad error model {e:?}")));
            }
        }
        Ok(())
    }
}

pub fn generate_workload(
    seed: u64,
    n_queries: usize,
    n_templates: usize,
    catalog_size: usize,
) -> Result<Vec<WorkloadSample>, BenchError> {
    generate_with_config(&GeneratorConfig {
        seed,
        n_queries,
        n_templates,
        catalog_size,
        ..GeneratorConfig::default()
    })
}

pub fn generate_with_config(cfg: &GeneratorConfig) -> Result<Vec<WorkloadSample>, BenchError> {
    cfg.check()?;
    let catalog = Catalog::new(cfg.catalog_size);
    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TEMPLATES));
    let templates = generate_templates(&mut trng, cfg.n_templates, &catalog)?;
    let splits = assign_splits(cfg.n_queries, cfg.split_ratios, cfg.seed);
    let consts = CostConstants::default();
    let out = (0..cfg.n_queries)
        .map(|i| {
            let qseed = derive_seed(cfg.seed, i as u64);
            let template = &templates[i % templates.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(qseed);
            let query = draw_query(template, &catalog, &mut rng);
            let plans = enumerate_plans(&query, derive_seed(qseed, STREAM_PLANS));
            let mut erng = ChaCha8Rng::seed_from_u64(derive_seed(qseed, STREAM_ERRORS));
            let factors = draw_true_factors(&query, cfg, &mut erng);
            let times: Vec<f64> = plans
                .iter()
                .enumerate()
                .map(|(k, plan)| {
                    let profile =
                        PlanCostProfile::for_plan(plan, &query, &consts, (cfg.noise_range[0], cfg.noise_range[1]));
                    let rows = node_rows(plan, &query, &factors, &consts);
                    simulate_execution(plan, &query, &profile, &rows, derive_seed(qseed, STREAM_RUN + k as u64))
                })
                .collect();
            let labels = if cfg.timeout {
                apply_timeout(&times)
            } else {
                times.into_iter().map(roq_core::Label::completed).collect()
            };
            WorkloadSample {
                query,
                plans,
                labels,
                split: splits[i],
                template_id: template.id,
            }
        })
        .collect();
    Ok(out)
}

/// Shuffled assignment with floor(r·n) train and validation queries and
/// the remainder as test.
pub fn assign_splits(n: usize, ratios: [f64; 3], seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SPLIT)));
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = ((ratios[1] * n as f64 + 1e-9).floor() as usize).min(n - n_train);
    let mut splits = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        splits[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    splits
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn draw_query<R: Rng>(template: &QueryTemplate, catalog: &Catalog, rng: &mut R) -> QueryGraph {
    let nodes: Vec<TableNode> = template
        .table_ids
        .iter()
        .map(|&id| TableNode {
            cardinality: catalog.cardinalities[id as usize],
            selectivity: 10f64.powf(uniform(rng, template.log_selectivity)),
            correlation: uniform(rng, template.correlation),
            table_id: id,
        })
        .collect();
    let edges = template
        .edge_pairs()
        .into_iter()
        .map(|(l, r)| {
            let card = nodes[l].cardinality.max(nodes[r].cardinality);
            let mult = 10f64.powf(rng.random_range(-0.3..0.7));
            JoinEdge {
                left: l,
                right: r,
                join_type: template.draw_join_type(rng),
                predicate: template.draw_predicate(rng),
                selectivity: (mult / card).min(1.0),
                skew: uniform(rng, (0.0, template.max_skew)),
            }
        })
        .collect();
    QueryGraph::new(nodes, edges, template.topology).with_aggregate(template.has_aggregate)
}

/// Multiplicative truth/estimate ratios per table and per edge.
pub fn draw_true_factors<R: Rng>(query: &QueryGraph, cfg: &GeneratorConfig, rng: &mut R) -> CardinalityFactors {
    CardinalityFactors {
        table: query
            .nodes
            .iter()
            .map(|n| cfg.table_error.normal(n.correlation).sample(rng).exp())
            .collect(),
        edge: query
            .edges
            .iter()
            .map(|e| cfg.edge_error.normal(e.skew).sample(rng).exp())
            .collect(),
    }
}
