use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use super::{ColorSpace, ImageTensor, ImagingError};
use crate::plane::Plane;

/// Reads an 8-bit grayscale or RGB(A) PNG into [0, 1]. Alpha is dropped;
/// palette and sub-byte grayscale images are expanded to 8 bits.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageTensor, ImagingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ImagingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decode_err = |source| ImagingError::Decode {
        path: path.to_path_buf(),
        source,
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let depth = reader.info().bit_depth;
    if depth == BitDepth::Sixteen {
        return Err(ImagingError::UnsupportedDepth {
            path: path.to_path_buf(),
            depth: 16,
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or(ImagingError::BufferSize {
            expected: usize::MAX,
            found: 0,
        })?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let bytes = &buf[..frame.buffer_size()];
    let (colorspace, stride, keep) = match frame.color_type {
        ColorType::Grayscale => (ColorSpace::Y, 1, 1),
        ColorType::GrayscaleAlpha => (ColorSpace::Y, 2, 1),
        ColorType::Rgb => (ColorSpace::Rgb, 3, 3),
        ColorType::Rgba => (ColorSpace::Rgb, 4, 3),
        other => {
            return Err(ImagingError::UnsupportedColorType {
                path: path.to_path_buf(),
                color: other,
            })
        }
    };
    let data = bytes
        .chunks_exact(stride)
        .flat_map(|px| px[..keep].iter().map(|&b| f64::from(b) / 255.0))
        .collect();
    ImageTensor::new(height, width, colorspace, data)
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: &[u8],
) -> Result<(), ImagingError> {
    let file = File::create(path).map_err(|source| ImagingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let encode_err = |source| ImagingError::Encode {
        path: path.to_path_buf(),
        source,
    };
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Writes an 8-bit PNG, clamping to [0, 1]. YCbCr images are written as their
/// raw three channels.
pub fn save_png(img: &ImageTensor, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let color = match img.colorspace() {
        ColorSpace::Y => ColorType::Grayscale,
        ColorSpace::Rgb | ColorSpace::YCbCr => ColorType::Rgb,
    };
    let bytes: Vec<u8> = img.as_slice().iter().map(|&v| quantize8(v)).collect();
    write_png(
        path.as_ref(),
        img.width(),
        img.height(),
        color,
        BitDepth::Eight,
        &bytes,
    )
}

/// Writes a plane as 16-bit grayscale after mapping `[lo, hi]` onto
/// `[0, 65535]`. A flat plane (`lo == hi`) is written as zeros.
pub fn save_png16_gray(
    plane: &Plane,
    lo: f64,
    hi: f64,
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    let span = hi - lo;
    let bytes: Vec<u8> = plane
        .as_slice()
        .iter()
        .flat_map(|&v| {
            let q = if span > 0.0 {
                ((v - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            };
            q.to_be_bytes()
        })
        .collect();
    write_png(
        path.as_ref(),
        plane.width(),
        plane.height(),
        ColorType::Grayscale,
        BitDepth::Sixteen,
        &bytes,
    )
}
