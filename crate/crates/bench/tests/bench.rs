use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roq_bench::cost::{node_rows, CardinalityFactors};
use roq_bench::enumerate::random_chain_query;
use roq_bench::*;
use roq_core::{serialize_workload, validate, Split, Topology};

fn bytes(w: &[roq_core::WorkloadSample]) -> Vec<u8> {
    let mut buf = Vec::new();
    serialize_workload(w, &mut buf).unwrap();
    buf
}

#[test]
fn generation_is_deterministic() {
    let a = generate_workload(1, 10, 2, 24).unwrap();
    let b = generate_workload(1, 10, 2, 24).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
}

#[test]
fn stock_workload_counts() {
    let w = generate_workload(1, 1000, 15, 24).unwrap();
    assert_eq!(w.len(), 1000);
    let count = |s: Split| w.iter().filter(|x| x.split == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Validation), count(Split::Test)),
        (800, 100, 100)
    );
    let ids: BTreeSet<u32> = w.iter().map(|s| s.template_id).collect();
    assert_eq!(ids, (0..15).collect());
    for (i, s) in w.iter().enumerate() {
        assert_eq!(validate(s), Ok(()), "sample {i}");
        for p in &s.plans {
            assert_eq!(p.root_node().tables.len(), s.query.table_count());
        }
    }
}

#[test]
fn seeds_change_queries_not_template_ids() {
    let a = generate_workload(1, 200, 15, 24).unwrap();
    let b = generate_workload(2, 200, 15, 24).unwrap();
    assert_ne!(bytes(&a), bytes(&b));
    let ids = |w: &[roq_core::WorkloadSample]| w.iter().map(|s| s.template_id).collect::<BTreeSet<_>>();
    assert_eq!(ids(&a), ids(&b));
}

#[test]
fn small_catalog_is_rejected() {
    assert!(matches!(generate_workload(1, 10, 2, 5), Err(BenchError::Config(_))));
    assert!(generate_workload(1, 0, 2, 24).is_err());
}

#[test]
fn single_table_query_has_scan_variants_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..50 {
        let q = random_chain_query(&mut rng, 1).with_aggregate(k % 2 == 0);
        let plans = enumerate_plans(&q, k);
        assert!((1..=2).contains(&plans.len()), "{} plans", plans.len());
    }
}

#[test]
fn four_table_chains_get_distinct_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..100 {
        let q = random_chain_query(&mut rng, 4);
        let plans = enumerate_plans(&q, k);
        let keys: HashSet<String> = plans.iter().map(|p| p.canonical_key()).collect();
        assert!(keys.len() >= 3, "query {k}: {} distinct plans", keys.len());
        assert_eq!(plans, enumerate_plans(&q, k));
    }
}

fn sample_query() -> (roq_core::QueryGraph, roq_core::PlanTree) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let q = random_chain_query(&mut rng, 3);
    let p = enumerate_plans(&q, 0).remove(0);
    (q, p)
}

#[test]
fn no_noise_no_error_gives_base_cost() {
    let (q, p) = sample_query();
    let consts = CostConstants::default();
    let profile = PlanCostProfile::for_plan(&p, &q, &consts, (0.0, 0.0));
    let rows = node_rows(&p, &q, &CardinalityFactors::exact(&q), &consts);
    assert_eq!(simulate_execution(&p, &q, &profile, &rows, 5), profile.base_cost);
}

#[test]
fn zero_sensitivity_ignores_cardinality_error() {
    let (q, p) = sample_query();
    let consts = CostConstants::default();
    let profile = PlanCostProfile::new(2.0, 0.0, 0.1).unwrap();
    let exact = node_rows(&p, &q, &CardinalityFactors::exact(&q), &consts);
    let off = node_rows(
        &p,
        &q,
        &CardinalityFactors {
            table: vec![50.0; 3],
            edge: vec![0.1; 2],
        },
        &consts,
    );
    assert_ne!(exact, off);
    for seed in 0..20 {
        assert_eq!(
            simulate_execution(&p, &q, &profile, &exact, seed),
            simulate_execution(&p, &q, &profile, &off, seed)
        );
    }
}

#[test]
fn simulated_noise_variance_matches_profile() {
    let (q, p) = sample_query();
    let consts = CostConstants::default();
    let profile = PlanCostProfile::new(10.0, 0.0, 0.5).unwrap();
    let rows = node_rows(&p, &q, &CardinalityFactors::exact(&q), &consts);
    let n = 10_000;
    let xs: Vec<f64> = (0..n)
        .map(|s| simulate_execution(&p, &q, &profile, &rows, s as u64))
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let analytic = profile.noise_scale.powi(2);
    assert!((var / analytic - 1.0).abs() < 0.05, "var {var} vs {analytic}");
}

#[test]
fn two_group_workload_is_ordered_by_noise() {
    let w = generate_two_group(&TwoGroupConfig::default()).unwrap();
    assert_eq!(w.samples.len(), w.groups.len());
    for (s, &g) in w.samples.iter().zip(&w.groups) {
        assert!(s.query.nodes.iter().all(|n| n.correlation == GROUP_CORRELATION[g]));
        assert_eq!(validate(s), Ok(()));
    }
    assert!(w.groups.contains(&0) && w.groups.contains(&1));
}

proptest! {
    #[test]
    fn timeout_keeps_the_minimum(times in proptest::collection::vec(1e-3f64..100.0, 1..30)) {
        let labels = apply_timeout(&times);
        prop_assert_eq!(labels.len(), times.len());
        let min_in = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_out = labels.iter().map(|l| l.execution_time).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(min_in, min_out);
        prop_assert!(!labels[0].timed_out);
        for (l, t) in labels.iter().zip(&times) {
            prop_assert!(l.execution_time <= *t);
            if !l.timed_out {
                prop_assert_eq!(l.execution_time, *t);
            }
        }
    }

    #[test]
    fn enumerated_plans_are_valid(seed in 0u64..1000, n in 1usize..7, agg in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topology = [Topology::Chain, Topology::Star, Topology::Cycle, Topology::Clique][rng.random_range(0..4)];
        let mut q = random_chain_query(&mut rng, n);
        let pairs = roq_bench::catalog::topology_edges(topology, n);
        let proto = q.edges.first().cloned();
        if let Some(proto) = proto {
            q = roq_core::QueryGraph::new(
                q.nodes.clone(),
                pairs.iter().map(|&(l, r)| roq_core::JoinEdge { left: l, right: r, ..proto.clone() }).collect(),
                topology,
            );
        }
        let q = q.with_aggregate(agg);
        let plans = enumerate_plans(&q, seed);
        prop_assert!(!plans.is_empty());
        for (i, p) in plans.iter().enumerate() {
            prop_assert!(roq_core::validate_plan(p, i, &q).is_empty());
        }
    }
}

#[test]
fn closed_form_matches_monte_carlo_on_random_pcfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..20 {
        let pcf = random_pcf(&mut rng);
        let cf = decompose_variance_closed_form(&pcf);
        let mc = decompose_variance_monte_carlo(&pcf, 1_000_000, k).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(mc.terms.data_term, cf.data_term) <= 0.02, "{k}: data {mc:?} {cf:?}");
        assert!(
            rel(mc.terms.model_term, cf.model_term) <= 0.02,
            "{k}: model {mc:?} {cf:?}"
        );
        assert!(rel(mc.terms.total, cf.total) <= 0.02, "{k}: total");
        assert!(rel(mc.terms.total, mc.total_direct) <= 0.02, "{k}: direct");
    }
}

/// Draws until the data/model ratio lies in [1/3, 3]. Far outside that band
/// the smaller term is a sliver of the total and its nested estimate needs
/// far more than 1e6 samples for 2% relative accuracy.
fn random_pcf(rng: &mut ChaCha8Rng) -> LinearPcf {
    loop {
        let sigma_a = rng.random_range(0.1..1.0);
        let sigma_b = rng.random_range(0.1..1.0);
        let rho = rng.random_range(-0.5..0.5);
        let pcf = LinearPcf::new(
            rng.random_range(0.5..3.0),
            sigma_a,
            rng.random_range(-2.0..2.0),
            sigma_b,
            rho * sigma_a * sigma_b,
            rng.random_range(1.0..5.0),
            rng.random_range(0.2..2.0),
        )
        .unwrap();
        let cf = decompose_variance_closed_form(&pcf);
        let ratio = cf.data_term / cf.model_term;
        if (1.0 / 3.0..=3.0).contains(&ratio) {
            return pcf;
        }
    }
}

#[test]
fn reference_pcf_monte_carlo() {
    let pcf = LinearPcf::new(2.0, 0.5, 1.0, 0.3, 0.0, 5.0, 1.0).unwrap();
    let mc = decompose_variance_monte_carlo(&pcf, 1_000_000, 1).unwrap();
    assert!((mc.terms.data_term / 4.25 - 1.0).abs() < 0.02);
    assert!((mc.terms.model_term / 6.34 - 1.0).abs() < 0.02);
    assert!((mc.total_direct / 10.59 - 1.0).abs() < 0.02);
}
