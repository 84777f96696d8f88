//! Minimal reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! A [`Tape`] records every operation together with its backward rule;
//! [`Var`] is a copyable handle into one tape. Reductions accumulate in `f64`.

mod checkpoint;
pub mod gradcheck;
mod nn;
mod ops;
mod params;
mod swt;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use ops::L1Reduction;
pub use params::{BoundParams, ParamId, ParamSet};
pub use swt::{subband, DiffSubbands};
pub use tape::{Tape, Var};
pub use tensor::{Tensor, MAX_RANK};

use std::path::PathBuf;

use thiserror::Error;

use crate::wavelet::WaveletError;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a rank-{rank} tensor, got shape {shape:?}")]
    ExpectedRank {
        op: &'static str,
        rank: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: expected {expected} channels, got {found}")]
    Channels {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("tensors have at most 4 dimensions, got {0}")]
    Rank(usize),
    #[error("shape {shape:?} needs {} elements, got {found}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, found: usize },
    #[error("backward seed must be a scalar, got shape {0:?}")]
    NonScalarSeed(Vec<usize>),
    #[error("backward seed does not depend on any trainable tensor")]
    Detached,
    #[error("backward already ran on this tape; reset it first")]
    AlreadyBackpropagated,
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("concatenation of zero tensors")]
    EmptyConcat,
    #[error("no gradient for parameter {0}")]
    MissingGradient(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}
