//! The RGB-domain RRDB-style generator and the subband-domain discriminator.

mod discriminator;
mod generator;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autodiff::{AutodiffError, BoundParams, DiffSubbands, ParamId, ParamSet, Tape, Tensor, Var};
use crate::imaging::{ColorSpace, ImageTensor};
use crate::plane::Plane;
use crate::wavelet::{SubbandLabel, SubbandSet};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{model} expects {expected} input channels, got {found}")]
    InputChannels {
        model: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("discriminator was built for {expected}x{expected} inputs, got {found:?}")]
    InputSize { expected: usize, found: (usize, usize) },
    #[error("subband set has no {0} band")]
    MissingSubband(&'static str),
    #[error("cannot batch images: {0}")]
    Batch(String),
    #[error("checkpoint was written for {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// He-normal weights (std √(2/fan_in)) multiplied by `gain`.
pub(crate) fn he_normal(shape: &[usize], fan_in: usize, gain: f32, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| gain * normal.sample(rng) as f32)
}

/// Convolution layer parameters: `weight: (out, in, k, k)`, optional bias.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
}

pub(crate) struct ConvSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bias: bool,
    pub gain: f32,
}

impl Conv {
    pub fn new(params: &mut ParamSet, name: &str, spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let ConvSpec { inputs, outputs, kernel, stride, bias, gain } = spec;
        let fan_in = inputs * kernel * kernel;
        let weight = params.push(
            format!("{name}.weight"),
            he_normal(&[outputs, inputs, kernel, kernel], fan_in, gain, rng),
        );
        let bias = bias.then(|| params.push(format!("{name}.bias"), Tensor::zeros(&[outputs])));
        Self { weight, bias, stride, padding: 1 }
    }

    pub fn apply(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var, AutodiffError> {
        tape.conv2d(x, p.var(self.weight), self.bias.map(|b| p.var(b)), self.stride, self.padding)
    }
}

/// Stacks equally sized images into a `(B, C, H, W)` tensor.
pub fn stack_images(images: &[ImageTensor]) -> Result<Tensor, ModelError> {
    let first = images
        .first()
        .ok_or_else(|| ModelError::Batch("empty batch".into()))?;
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.height(), img.width(), img.channels()) != (h, w, c) {
            return Err(ModelError::Batch(format!(
                "image {}x{}x{} differs from {h}x{w}x{c}",
                img.height(),
                img.width(),
                img.channels()
            )));
        }
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.get(y, x, ch) as f32);
                }
            }
        }
    }
    Ok(Tensor::new(&[images.len(), c, h, w], data)?)
}

/// Splits a `(B, C, H, W)` tensor back into images.
pub fn unstack_images(t: &Tensor, colorspace: ColorSpace) -> Result<Vec<ImageTensor>, ModelError> {
    let [b, c, h, w] = t.dims4("unstack_images")?;
    if c != colorspace.channels() {
        return Err(ModelError::InputChannels {
            model: "unstack_images",
            expected: colorspace.channels(),
            found: c,
        });
    }
    let d = t.data();
    Ok((0..b)
        .map(|i| {
            ImageTensor::from_fn(h, w, colorspace, |y, x, ch| {
                f64::from(d[((i * c + ch) * h + y) * w + x])
            })
        })
        .collect())
}

/// Stacks single-channel planes into a `(B, 1, H, W)` tensor.
pub fn stack_planes(planes: &[Plane]) -> Result<Tensor, ModelError> {
    let first = planes
        .first()
        .ok_or_else(|| ModelError::Batch("empty batch".into()))?;
    let (h, w) = first.dims();
    if let Some(p) = planes.iter().find(|p| p.dims() != (h, w)) {
        return Err(ModelError::Batch(format!("plane {:?} differs from {:?}", p.dims(), (h, w))));
    }
    let data = planes
        .iter()
        .flat_map(|p| p.as_slice().iter().map(|&v| v as f32))
        .collect();
    Ok(Tensor::new(&[planes.len(), 1, h, w], data)?)
}

/// The `[LH, HL, HH]` detail planes of a decomposition, raw values.
pub fn detail_concat(set: &SubbandSet) -> Result<[Plane; 3], ModelError> {
    let get = |label: SubbandLabel| {
        set.get(label)
            .cloned()
            .ok_or(ModelError::MissingSubband(label.as_str()))
    };
    Ok([get(SubbandLabel::LH)?, get(SubbandLabel::HL)?, get(SubbandLabel::HH)?])
}

/// Tape version of [`detail_concat`]: `(B, 3, H, W)` from batched subbands.
pub fn detail_concat_diff(tape: &mut Tape, bands: &DiffSubbands) -> Result<Var, ModelError> {
    let get = |label: SubbandLabel| {
        crate::autodiff::subband(bands, label).ok_or(ModelError::MissingSubband(label.as_str()))
    };
    let parts = [get(SubbandLabel::LH)?, get(SubbandLabel::HL)?, get(SubbandLabel::HH)?];
    Ok(tape.concat_channels(&parts)?)
}
