//! Bicubic resampling with MATLAB `imresize` semantics: Keys cubic kernel
//! (a = -0.5), kernel widened by 1/scale when shrinking, symmetric edge
//! handling, output length `ceil(len · scale)`.

use super::{ImageTensor, ImagingError};
use crate::plane::Plane;

/// Keys cubic convolution kernel with a = -0.5.
pub fn cubic_kernel(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// `ceil(len · scale)`, tolerant of representation error in `scale`.
pub fn resized_len(len: usize, scale: f64) -> usize {
    let exact = len as f64 * scale;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

/// Per-output-sample taps: source indices and normalized weights.
struct Contributions {
    taps: usize,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

fn contributions(in_len: usize, out_len: usize, scale: f64) -> Contributions {
    let antialias = scale < 1.0;
    let width = if antialias { 4.0 / scale } else { 4.0 };
    let kernel = |x: f64| {
        if antialias {
            scale * cubic_kernel(scale * x)
        } else {
            cubic_kernel(x)
        }
    };
    let taps = width.ceil() as usize + 2;
    let period = 2 * in_len;
    let mut indices = Vec::with_capacity(out_len * taps);
    let mut weights = Vec::with_capacity(out_len * taps);
    for i in 1..=out_len {
        // one-based coordinates, as in MATLAB
        let u = i as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
        let left = (u - width / 2.0).floor() as i64;
        let start = weights.len();
        for p in 0..taps as i64 {
            let idx = left + p;
            weights.push(kernel(u - idx as f64));
            // symmetric extension: [1..n, n..1] repeated
            let m = (idx - 1).rem_euclid(period as i64) as usize;
            indices.push(if m < in_len { m } else { period - 1 - m });
        }
        let total: f64 = weights[start..].iter().sum();
        for w in &mut weights[start..] {
            *w /= total;
        }
    }
    Contributions {
        taps,
        indices,
        weights,
    }
}

fn resize_height(src: &Plane, out_h: usize, scale: f64) -> Plane {
    let (h, w) = src.dims();
    let c = contributions(h, out_h, scale);
    let mut out = Plane::zeros(out_h, w);
    for y in 0..out_h {
        let taps = y * c.taps..(y + 1) * c.taps;
        for (&idx, &wt) in c.indices[taps.clone()].iter().zip(&c.weights[taps]) {
            let row = src.row(idx);
            let dst = &mut out.as_mut_slice()[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += wt * s;
            }
        }
    }
    out
}

fn resize_width(src: &Plane, out_w: usize, scale: f64) -> Plane {
    let (h, w) = src.dims();
    let c = contributions(w, out_w, scale);
    Plane::from_fn(h, out_w, |y, x| {
        let row = src.row(y);
        let taps = x * c.taps..(x + 1) * c.taps;
        c.indices[taps.clone()]
            .iter()
            .zip(&c.weights[taps])
            .map(|(&i, &wt)| wt * row[i])
            .sum()
    })
}

/// Resizes one plane by the same factor along both axes (height first).
pub fn resize_plane(plane: &Plane, scale: f64) -> Result<Plane, ImagingError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(ImagingError::InvalidScale(scale));
    }
    let out_h = resized_len(plane.height(), scale);
    let out_w = resized_len(plane.width(), scale);
    let tmp = resize_height(plane, out_h, scale);
    Ok(resize_width(&tmp, out_w, scale))
}

pub fn bicubic_resize(img: &ImageTensor, scale: f64) -> Result<ImageTensor, ImagingError> {
    let planes = img
        .planes()
        .iter()
        .map(|p| resize_plane(p, scale))
        .collect::<Result<Vec<_>, _>>()?;
    ImageTensor::from_planes(&planes, img.colorspace())
}
