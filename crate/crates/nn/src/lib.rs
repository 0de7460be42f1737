//! Reverse-mode automatic differentiation on a per-pass tape, plus the
//! layers needed by a graph-plus-tree cost model: dense, dropout, graph
//! attention with global attributes, tree convolution and pooling.
//!
//! Matrix products go through `matrixmultiply`'s `dgemm`; everything else
//! is plain loops over row-major `f64` buffers.

use thiserror::Error;

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{Checkpoint, StoredTensor, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use graph::{gaussian_nll, sigmoid, Gradients, Graph, Var};
pub use layers::{
    activate, dropout, dynamic_pool, readout, Activation, Adjacency, AttentionOutput, Dense, DropoutMode,
    GraphAttention, TreeConv, LEAKY_SLOPE,
};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("dropout rate {0} outside [0, 1)")]
    BadRate(f64),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
