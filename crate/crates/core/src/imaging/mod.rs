//! Pixel containers, colour conversion, bicubic resampling and PNG I/O.

mod color;
mod io;
mod resize;

pub use color::{extract_y, rgb_to_ycbcr, ycbcr_to_rgb, LUMA_OFFSET, LUMA_WEIGHTS};
pub use io::{load_png, save_png, save_png16_gray};
pub use resize::{bicubic_resize, cubic_kernel, resize_plane, resized_len};

use std::path::PathBuf;

use thiserror::Error;

use crate::plane::Plane;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("expected a {expected} image, got {found}")]
    WrongColorspace {
        expected: &'static str,
        found: ColorSpace,
    },
    #[error("image is already single-channel (Y)")]
    AlreadyLuma,
    #[error("resize scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("{colorspace} image needs {expected} channels, got {found}")]
    ChannelMismatch {
        colorspace: ColorSpace,
        expected: usize,
        found: usize,
    },
    #[error("pixel buffer has {found} samples, expected {expected}")]
    BufferSize { expected: usize, found: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: png::DecodingError,
    },
    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        source: png::EncodingError,
    },
    #[error("{path}: unsupported PNG bit depth {depth}; only 8-bit images are accepted")]
    UnsupportedDepth { path: PathBuf, depth: u8 },
    #[error("{path}: unsupported PNG colour type {color:?}")]
    UnsupportedColorType { path: PathBuf, color: png::ColorType },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
    Y,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
            ColorSpace::Y => 1,
        }
    }
}

impl std::fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::YCbCr => "YCbCr",
            ColorSpace::Y => "Y",
        })
    }
}

/// Dense H×W×C raster with interleaved channels, nominal range [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    colorspace: ColorSpace,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        colorspace: ColorSpace,
        data: Vec<f64>,
    ) -> Result<Self, ImagingError> {
        let expected = height * width * colorspace.channels();
        if data.len() != expected {
            return Err(ImagingError::BufferSize {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            colorspace,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, colorspace: ColorSpace, value: f64) -> Self {
        Self {
            height,
            width,
            colorspace,
            data: vec![value; height * width * colorspace.channels()],
        }
    }

    /// `f(y, x, c)` for every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        colorspace: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let c = colorspace.channels();
        let mut data = Vec::with_capacity(height * width * c);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..c {
                    data.push(f(y, x, ch));
                }
            }
        }
        Self {
            height,
            width,
            colorspace,
            data,
        }
    }

    /// Interleaves per-channel planes.
    pub fn from_planes(planes: &[Plane], colorspace: ColorSpace) -> Result<Self, ImagingError> {
        let c = colorspace.channels();
        if planes.len() != c {
            return Err(ImagingError::ChannelMismatch {
                colorspace,
                expected: c,
                found: planes.len(),
            });
        }
        let (h, w) = planes[0].dims();
        if let Some(p) = planes.iter().find(|p| p.dims() != (h, w)) {
            return Err(ImagingError::BufferSize {
                expected: h * w,
                found: p.height() * p.width(),
            });
        }
        Ok(Self::from_fn(h, w, colorspace, |y, x, ch| planes[ch][(y, x)]))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    pub fn channel(&self, c: usize) -> Plane {
        let n = self.channels();
        Plane::from_fn(self.height, self.width, |y, x| {
            self.data[(y * self.width + x) * n + c]
        })
    }

    pub fn planes(&self) -> Vec<Plane> {
        (0..self.channels()).map(|c| self.channel(c)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Rectangle copy; panics when out of bounds.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Self {
        assert!(top + height <= self.height && left + width <= self.width);
        Self::from_fn(height, width, self.colorspace, |y, x, c| {
            self.get(top + y, left + x, c)
        })
    }
}

impl From<Plane> for ImageTensor {
    fn from(plane: Plane) -> Self {
        let (height, width) = plane.dims();
        Self {
            height,
            width,
            colorspace: ColorSpace::Y,
            data: plane.into_vec(),
        }
    }
}
