//! Training, MC-dropout inference and persistence for [`CostModel`].

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roq_core::{derive_seed, CostDistribution, PlanTree, QueryGraph, Split, WorkloadSample};
use roq_nn::{Adam, AdamConfig, Checkpoint, DropoutMode, Graph, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::encode::{build_batch, encode_query, EncodedQuery};
use crate::network::Network;
use crate::preprocess::{fit_preprocess, PreprocessStats};
use crate::ModelError;

/// Plans per batch when scoring without gradients.
const EVAL_BATCH: usize = 512;

/// `(μ̂_t, σ̂_t²)` from each of T stochastic passes, transformed label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDropoutSamples {
    pub samples: Vec<(f64, f64)>,
}

/// Mean of the means, mean of the variances, and the population variance
/// of the means. The last is computed on deviations from the first pass
/// and then from their mean, not as `E[μ²] − E[μ]²`, which cancels badly
/// when the passes agree closely. Identical passes give exactly zero.
pub fn aggregate(s: &McDropoutSamples) -> CostDistribution {
    let t = s.samples.len().max(1) as f64;
    let shift = s.samples.first().map_or(0.0, |p| p.0);
    let dev = s.samples.iter().map(|p| p.0 - shift).sum::<f64>() / t;
    let data = s.samples.iter().map(|p| p.1).sum::<f64>() / t;
    let model = s.samples.iter().map(|p| (p.0 - shift - dev).powi(2)).sum::<f64>() / t;
    CostDistribution::new(shift + dev, data, model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub validation_nll: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Validation NLL of the untrained network.
    pub initial_validation_nll: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Architecture {
    config: ModelConfig,
    stats: PreprocessStats,
}

#[derive(Debug, Clone)]
pub struct CostModel {
    pub config: ModelConfig,
    pub stats: PreprocessStats,
    pub store: ParamStore,
    net: Network,
}

struct Encoded {
    query: EncodedQuery,
    all_plans: Vec<usize>,
    labels: Vec<f64>,
}

fn encode_split(samples: &[&WorkloadSample], stats: &PreprocessStats) -> Result<Vec<Encoded>, ModelError> {
    samples
        .iter()
        .map(|s| {
            Ok(Encoded {
                query: encode_query(&s.query, &s.plans, stats)?,
                all_plans: (0..s.plans.len()).collect(),
                labels: s
                    .labels
                    .iter()
                    .map(|l| stats.transform_label(l.execution_time))
                    .collect(),
            })
        })
        .collect()
}

/// Consecutive runs of whole queries holding about `target` plans each.
fn chunk(order: &[usize], data: &[Encoded], target: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut plans = 0;
    for &i in order {
        cur.push(i);
        plans += data[i].all_plans.len();
        if plans >= target {
            out.push(std::mem::take(&mut cur));
            plans = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl CostModel {
    /// Untrained model with weights drawn from `seed`.
    pub fn init(config: ModelConfig, stats: PreprocessStats, seed: u64) -> Result<Self, ModelError> {
        config.check()?;
        if stats.table_vocab != config.table_vocab {
            return Err(ModelError::Config(format!(
                "stats fitted for table_vocab {} but config has {}",
                stats.table_vocab, config.table_vocab
            )));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
        let net = Network::new(&mut store, &config, &mut rng)?;
        Ok(Self {
            config,
            stats,
            store,
            net,
        })
    }

    fn nll(&self, data: &[Encoded]) -> Result<f64, ModelError> {
        let order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut total, mut n) = (0.0, 0usize);
        for group in chunk(&order, data, EVAL_BATCH) {
            let items: Vec<(&EncodedQuery, &[usize])> = group
                .iter()
                .map(|&i| (&data[i].query, data[i].all_plans.as_slice()))
                .collect();
            let y: Vec<f64> = group.iter().flat_map(|&i| data[i].labels.iter().copied()).collect();
            let batch = build_batch(&items, self.config.table_vocab)?;
            let mut g = Graph::new();
            let (mu, lv) = self
                .net
                .forward(&mut g, &self.store, &batch, DropoutMode::Deterministic, &mut rng)?;
            let loss = g.gaussian_nll(mu, lv, &y)?;
            total += g.value(loss).item() * y.len() as f64;
            n += y.len();
        }
        Ok(total / n.max(1) as f64)
    }

    /// Validation NLL of `samples` under deterministic (dropout-free) passes.
    pub fn validation_nll(&self, samples: &[&WorkloadSample]) -> Result<f64, ModelError> {
        self.nll(&encode_split(samples, &self.stats)?)
    }

    /// Deterministic `(μ, ln σ²)` for one plan.
    pub fn forward(&self, query: &QueryGraph, plan: &PlanTree) -> Result<(f64, f64), ModelError> {
        let enc = encode_query(query, std::slice::from_ref(plan), &self.stats)?;
        let batch = build_batch(&[(&enc, &[0])], self.config.table_vocab)?;
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mu, lv) = self
            .net
            .forward(&mut g, &self.store, &batch, DropoutMode::Deterministic, &mut rng)?;
        Ok((g.value(mu).item(), g.value(lv).item()))
    }

    /// T stochastic passes for each of `plans`, all in one batch. Returns one
    /// sample set per plan.
    pub fn mc_samples(
        &self,
        query: &QueryGraph,
        plans: &[PlanTree],
        t: usize,
        seed: u64,
    ) -> Result<Vec<McDropoutSamples>, ModelError> {
        let t = t.max(1);
        let enc = encode_query(query, plans, &self.stats)?;
        let ids: Vec<usize> = (0..plans.len()).collect();
        let items: Vec<(&EncodedQuery, &[usize])> = (0..t).map(|_| (&enc, ids.as_slice())).collect();
        let batch = build_batch(&items, self.config.table_vocab)?;
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mu, lv) = self
            .net
            .forward(&mut g, &self.store, &batch, DropoutMode::McInference, &mut rng)?;
        let (mu, lv) = (g.value(mu).values(), g.value(lv).values());
        let p = plans.len();
        Ok((0..p)
            .map(|j| McDropoutSamples {
                samples: (0..t).map(|r| (mu[r * p + j], lv[r * p + j].exp())).collect(),
            })
            .collect())
    }

    pub fn mc_inference(
        &self,
        query: &QueryGraph,
        plan: &PlanTree,
        t: usize,
        seed: u64,
    ) -> Result<McDropoutSamples, ModelError> {
        Ok(self.mc_samples(query, std::slice::from_ref(plan), t, seed)?.remove(0))
    }

    pub fn predict_query(
        &self,
        query: &QueryGraph,
        plans: &[PlanTree],
        t: usize,
        seed: u64,
    ) -> Result<Vec<CostDistribution>, ModelError> {
        Ok(self.mc_samples(query, plans, t, seed)?.iter().map(aggregate).collect())
    }

    /// Predicts every `(query id, sample)` pair. Each query's dropout stream
    /// is derived from `(seed, query id)`, so a subset predicts the same as
    /// the full workload.
    pub fn predict_workload<'a, I>(&self, samples: I, t: usize, seed: u64) -> Result<Vec<QueryPrediction>, ModelError>
    where
        I: IntoIterator<Item = (usize, &'a WorkloadSample)>,
    {
        samples
            .into_iter()
            .map(|(id, s)| {
                let start = Instant::now();
                let dists = self.predict_query(&s.query, &s.plans, t, derive_seed(seed, id as u64))?;
                Ok(QueryPrediction {
                    query_id: id,
                    dists,
                    infer_ms: start.elapsed().as_secs_f64() * 1e3,
                })
            })
            .collect()
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint, ModelError> {
        let arch = serde_json::to_value(Architecture {
            config: self.config.clone(),
            stats: self.stats.clone(),
        })
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Ok(Checkpoint::capture(&self.store, arch))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let arch: Architecture = serde_json::from_value(ck.architecture.clone())
            .map_err(|e| ModelError::Checkpoint(format!("missing model config or preprocess stats: {e}")))?;
        let mut model = Self::init(arch.config, arch.stats, 0)?;
        ck.restore(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPrediction {
    pub query_id: usize,
    pub dists: Vec<CostDistribution>,
    pub infer_ms: f64,
}

pub const PREDICTION_HEADER: &str = "query_id,plan_id,mean,data_var,model_var,total_var,infer_ms";

/// CSV rows under [`PREDICTION_HEADER`]. With `timing` off the last column
/// is `NA` so the table is reproducible byte for byte.
pub fn prediction_csv(rows: &[QueryPrediction], timing: bool) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in rows {
        let ms = if timing {
            format!("{:.3}", r.infer_ms)
        } else {
            "NA".to_string()
        };
        for (j, d) in r.dists.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{}\n",
                r.query_id, j, d.mean, d.data_variance, d.model_variance, d.total_variance, ms
            ));
        }
    }
    out
}

/// Fits preprocessing on the train split, then trains with Adam on the
/// Gaussian NLL, keeping the parameters of the best validation epoch.
pub fn train(
    samples: &[WorkloadSample],
    config: &ModelConfig,
    seed: u64,
) -> Result<(CostModel, TrainingLog), ModelError> {
    let train_set: Vec<&WorkloadSample> = samples.iter().filter(|s| s.split == Split::Train).collect();
    let val_set: Vec<&WorkloadSample> = samples.iter().filter(|s| s.split == Split::Validation).collect();
    train_on(&train_set, &val_set, config, seed)
}

pub fn train_on(
    train_set: &[&WorkloadSample],
    val_set: &[&WorkloadSample],
    config: &ModelConfig,
    seed: u64,
) -> Result<(CostModel, TrainingLog), ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }
    let stats = fit_preprocess(train_set.iter().copied(), config.table_vocab)?;
    let mut model = CostModel::init(config.clone(), stats, seed)?;
    let train_data = encode_split(train_set, &model.stats)?;
    let val_data = encode_split(val_set, &model.stats)?;

    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut lr = config.learning_rate;
    let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let initial = model.nll(&val_data)?;
    let mut log = TrainingLog {
        initial_validation_nll: initial,
        epochs: Vec::new(),
        best_epoch: 0,
        best_validation_nll: initial,
    };
    let mut best = model.store.clone();
    let (mut since_best, mut since_lr) = (0, 0);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=config.max_epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + epoch as u64));
        order.shuffle(&mut shuffle);
        let (mut total, mut n) = (0.0, 0usize);
        for group in chunk(&order, &train_data, config.batch_size) {
            let items: Vec<(&EncodedQuery, &[usize])> = group
                .iter()
                .map(|&i| (&train_data[i].query, train_data[i].all_plans.as_slice()))
                .collect();
            let y: Vec<f64> = group
                .iter()
                .flat_map(|&i| train_data[i].labels.iter().copied())
                .collect();
            let batch = build_batch(&items, config.table_vocab)?;
            let mut g = Graph::new();
            let (mu, lv) = model
                .net
                .forward(&mut g, &model.store, &batch, DropoutMode::Train, &mut drop_rng)?;
            let loss = g.gaussian_nll(mu, lv, &y)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            g.backward(loss, &mut model.store)?;
            adam.step(&mut model.store);
            total += value * y.len() as f64;
            n += y.len();
        }
        let val = model.nll(&val_data)?;
        if !val.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_nll: total / n.max(1) as f64,
            validation_nll: val,
            learning_rate: lr,
        });
        if val < log.best_validation_nll {
            log.best_validation_nll = val;
            log.best_epoch = epoch;
            best = model.store.clone();
            since_best = 0;
            since_lr = 0;
        } else {
            since_best += 1;
            since_lr += 1;
            if since_lr >= config.plateau_patience {
                lr *= config.plateau_factor;
                adam.set_lr(lr);
                since_lr = 0;
            }
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.store = best;
    model.store.zero_grad();
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_hand_case() {
        let d = aggregate(&McDropoutSamples {
            samples: vec![(1.0, 1.0), (3.0, 1.0)],
        });
        assert_eq!(
            (d.mean, d.data_variance, d.model_variance, d.total_variance),
            (2.0, 1.0, 1.0, 2.0)
        );
    }

    #[test]
    fn single_pass_has_no_model_variance() {
        let d = aggregate(&McDropoutSamples {
            samples: vec![(0.4, 0.02)],
        });
        assert_eq!(d.model_variance, 0.0);
        assert_eq!(d.total_variance, d.data_variance);
    }

    #[test]
    fn two_pass_variance_matches_moment_form() {
        let s = McDropoutSamples {
            samples: (0..50).map(|k| (0.3 + 0.001 * (k as f64).sin(), 0.01)).collect(),
        };
        let d = aggregate(&s);
        let m = s.samples.iter().map(|p| p.0).sum::<f64>() / 50.0;
        let m2 = s.samples.iter().map(|p| p.0 * p.0).sum::<f64>() / 50.0;
        assert!((d.model_variance - (m2 - m * m)).abs() < 1e-12);
    }
}
