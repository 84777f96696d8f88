//! Two-dimensional stationary (undecimated) wavelet transform.
//!
//! Filtering is separable with periodic boundary extension; deeper levels use
//! zero-upsampled ("à trous") filters instead of decimation, so every subband
//! has the resolution of the input and the transform commutes with circular
//! shifts.

mod filter;
mod swt;

pub use filter::{make_filter, make_filter_by_name, WaveletFamily, WaveletFilter};
pub use swt::{swt2_forward, swt2_inverse, SubbandLabel, SubbandSet, MAX_LEVELS};

pub(crate) use swt::{circular_filter, Axis};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("unknown wavelet family {name:?}; supported: {supported}")]
    UnknownFamily { name: String, supported: String },
    #[error("unsupported decomposition depth {0}; expected 1 or 2")]
    UnsupportedLevels(usize),
    #[error("image {height}x{width} is smaller than the {taps}-tap {filter} filter")]
    ImageTooSmall {
        height: usize,
        width: usize,
        filter: &'static str,
        taps: usize,
    },
    #[error("subbands [{found}] do not form a {levels}-level decomposition")]
    SubbandMismatch { levels: usize, found: String },
    #[error("subband {label} is {found:?}, expected {expected:?}")]
    SubbandSize {
        label: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("unknown subband label {0:?}")]
    UnknownSubband(String),
}
