//! Fixed table catalog and structural query templates.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roq_core::{JoinPredicate, JoinType, Topology};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// The catalog does not depend on the workload seed, so every workload sees
/// the same tables.
const CATALOG_SEED: u64 = 0x05EE_DCA7_A106;

pub const MIN_TABLES_PER_TEMPLATE: usize = 2;
pub const MAX_TABLES_PER_TEMPLATE: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    /// Base cardinality per table id.
    pub cardinalities: Vec<f64>,
}

impl Catalog {
    /// Cardinalities log-uniform in `[1e3, 1e7]`, rounded to whole rows.
    pub fn new(size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(CATALOG_SEED);
        let cardinalities = (0..size)
            .map(|_| 10f64.powf(rng.random_range(3.0..7.0)).round())
            .collect();
        Self { cardinalities }
    }

    pub fn len(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinalities.is_empty()
    }
}

/// Structure shared by all queries of a template; per-query attributes are
/// drawn inside the ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub id: u32,
    pub topology: Topology,
    pub table_ids: Vec<u32>,
    /// log10 of the local selectivity range.
    pub log_selectivity: (f64, f64),
    pub correlation: (f64, f64),
    pub max_skew: f64,
    pub outer_join_prob: f64,
    pub range_predicate_prob: f64,
    pub has_aggregate: bool,
}

impl QueryTemplate {
    /// Edge endpoints implied by the topology over `n` tables.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        topology_edges(self.topology, self.table_ids.len())
    }

    pub fn draw_join_type<R: Rng>(&self, rng: &mut R) -> JoinType {
        if rng.random::<f64>() < self.outer_join_prob {
            if rng.random::<bool>() {
                JoinType::LeftOuter
            } else {
                JoinType::Semi
            }
        } else {
            JoinType::Inner
        }
    }

    pub fn draw_predicate<R: Rng>(&self, rng: &mut R) -> JoinPredicate {
        if rng.random::<f64>() < self.range_predicate_prob {
            [JoinPredicate::Less, JoinPredicate::Greater][rng.random_range(0..2)]
        } else {
            JoinPredicate::Eq
        }
    }
}

pub fn topology_edges(topology: Topology, n: usize) -> Vec<(usize, usize)> {
    match topology {
        Topology::Chain => (1..n).map(|i| (i - 1, i)).collect(),
        Topology::Star => (1..n).map(|i| (0, i)).collect(),
        Topology::Cycle => {
            let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            if n >= 3 {
                e.push((n - 1, 0));
            }
            e
        }
        Topology::Clique => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
    }
}

pub fn generate_templates<R: Rng>(
    rng: &mut R,
    n_templates: usize,
    catalog: &Catalog,
) -> Result<Vec<QueryTemplate>, BenchError> {
    if catalog.len() < MAX_TABLES_PER_TEMPLATE {
        return Err(BenchError::Config(format!(
            "catalog_size {} is smaller than the largest template ({MAX_TABLES_PER_TEMPLATE} tables)",
            catalog.len()
        )));
    }
    let mut out = Vec::with_capacity(n_templates);
    for id in 0..n_templates {
        let n = rng.random_range(MIN_TABLES_PER_TEMPLATE..=MAX_TABLES_PER_TEMPLATE);
        let topology = match n {
            2 => Topology::Chain,
            3 | 4 => Topology::ALL[rng.random_range(0..4)],
            _ => Topology::ALL[rng.random_range(0..3)],
        };
        let table_ids = sample_indices(rng, catalog.len(), n)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        let lo: f64 = rng.random_range(-3.5..-0.5);
        let hi = (lo + rng.random_range(0.3..1.5)).min(0.0);
        let c = rng.random_range(0.0..1.0);
        out.push(QueryTemplate {
            id: id as u32,
            topology,
            table_ids,
            log_selectivity: (lo, hi),
            correlation: ((c - 0.15f64).max(0.0), (c + 0.15f64).min(1.0)),
            max_skew: rng.random_range(0.0..1.5),
            outer_join_prob: rng.random_range(0.0..0.3),
            range_predicate_prob: rng.random_range(0.0..0.2),
            has_aggregate: rng.random::<bool>(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_fixed() {
        assert_eq!(Catalog::new(24), Catalog::new(24));
        assert!(Catalog::new(24).cardinalities.iter().all(|&c| (1e3..=1e7).contains(&c)));
    }

    #[test]
    fn topology_edge_counts() {
        assert_eq!(topology_edges(Topology::Chain, 4).len(), 3);
        assert_eq!(topology_edges(Topology::Star, 4).len(), 3);
        assert_eq!(topology_edges(Topology::Cycle, 4).len(), 4);
        assert_eq!(topology_edges(Topology::Clique, 4).len(), 6);
        assert_eq!(topology_edges(Topology::Chain, 1).len(), 0);
    }

    #[test]
    fn small_catalog_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            generate_templates(&mut rng, 3, &Catalog::new(4)),
            Err(BenchError::Config(_))
        ));
    }
}
