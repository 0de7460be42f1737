//! Two-group workload with known, group-dependent label noise. Group 0
//! tables carry correlation 0.1, group 1 tables 0.9; execution times are
//! `base_cost * 10^(s_g * z)` with `z ~ N(0, 1)`, so the log10-time noise
//! variance of group `g` is exactly `s_g^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use roq_core::{derive_seed, Label, WorkloadSample};
use serde::{Deserialize, Serialize};

use crate::catalog::{generate_templates, Catalog};
use crate::cost::CostConstants;
use crate::enumerate::enumerate_plans;
use crate::generate::{assign_splits, draw_query};
use crate::simulate::PlanCostProfile;
use crate::BenchError;

pub const GROUP_CORRELATION: [f64; 2] = [0.1, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoGroupConfig {
    pub seed: u64,
    pub n_queries: usize,
    pub n_templates: usize,
    /// Std of log10 time per group; the default squares to a 1:4 ratio.
    pub log10_std: [f64; 2],
}

impl Default for TwoGroupConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_queries: 2000,
            n_templates: 4,
            log10_std: [0.25, 0.5],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoGroupWorkload {
    pub samples: Vec<WorkloadSample>,
    /// Group of each sample.
    pub groups: Vec<usize>,
    pub log10_std: [f64; 2],
}

pub fn generate_two_group(cfg: &TwoGroupConfig) -> Result<TwoGroupWorkload, BenchError> {
    if cfg.n_queries == 0 || cfg.n_templates == 0 {
        return Err(BenchError::Config("n_queries and n_templates must be >= 1".into()));
    }
    if cfg.log10_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(BenchError::Config(format!("bad log10_std {:?}", cfg.log10_std)));
    }
    let catalog = Catalog::new(roq_core::DEFAULT_CATALOG_SIZE);
    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX - 1));
    let templates = generate_templates(&mut trng, cfg.n_templates, &catalog)?;
    let splits = assign_splits(cfg.n_queries, [0.8, 0.1, 0.1], cfg.seed);
    let consts = CostConstants::default();
    let mut samples = Vec::with_capacity(cfg.n_queries);
    let mut groups = Vec::with_capacity(cfg.n_queries);
    for i in 0..cfg.n_queries {
        let qseed = derive_seed(cfg.seed, i as u64);
        let group = (i / cfg.n_templates) % 2;
        let template = &templates[i % templates.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(qseed);
        let mut query = draw_query(template, &catalog, &mut rng);
        for n in &mut query.nodes {
            n.correlation = GROUP_CORRELATION[group];
        }
        let plans = enumerate_plans(&query, derive_seed(qseed, 1));
        let labels = plans
            .iter()
            .map(|p| {
                let base = PlanCostProfile::for_plan(p, &query, &consts, (0.0, 0.0)).base_cost;
                let z: f64 = StandardNormal.sample(&mut rng);
                Label::completed(base * 10f64.powf(cfg.log10_std[group] * z))
            })
            .collect();
        samples.push(WorkloadSample {
            query,
            plans,
            labels,
            split: splits[i],
            template_id: template.id,
        });
        groups.push(group);
    }
    Ok(TwoGroupWorkload {
        samples,
        groups,
        log10_std: cfg.log10_std,
    })
}
