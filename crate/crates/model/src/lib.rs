//! Probabilistic learned cost model.
//!
//! A query graph goes through stacked graph attention layers and a mean/max
//! readout; each candidate plan goes through tree convolution over its
//! operator tree, with every plan node augmented by the mean of the
//! embeddings of the tables it covers. The two embeddings feed a shared
//! layer and then two branches: a sigmoid mean head and a log-variance
//! head. Dropout after every hidden layer stays on at inference time, and
//! T passes are aggregated into a [`roq_core::CostDistribution`] whose data
//! variance is the mean predicted variance and whose model variance is the
//! spread of the predicted means.
//!
//! Everything is in transformed label space: `log10` seconds, min-max
//! scaled with training-split statistics.

use thiserror::Error;

pub mod config;
pub mod encode;
pub mod features;
pub mod model;
pub mod network;
pub mod preprocess;

pub use config::ModelConfig;
pub use model::{
    aggregate, prediction_csv, train, train_on, CostModel, EpochRecord, McDropoutSamples, QueryPrediction, TrainingLog,
    PREDICTION_HEADER,
};
pub use preprocess::{fit_preprocess, MinMax, PreprocessStats};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] roq_nn::NnError),
    #[error("plan node {node} references table {table}, query has {tables}")]
    UnknownTable { node: usize, table: usize, tables: usize },
    #[error("plan index {0} out of range")]
    UnknownPlan(usize),
    #[error("label {0} is not a positive finite time")]
    BadLabel(f64),
    #[error("preprocessing needs at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
