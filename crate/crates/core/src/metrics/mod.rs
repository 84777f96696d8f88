//! Y-channel PSNR and SSIM, and LR-PSNR with its 45 dB consistency gate.

use std::fmt::Write as _;

use thiserror::Error;

use crate::imaging::{bicubic_resize, extract_y, ImageTensor, ImagingError};
use crate::plane::Plane;

/// Reported in place of +∞ when two images are identical.
pub const PSNR_CAP_DB: f64 = 99.0;
/// Minimum LR-PSNR for an SR output to count as LR-consistent.
pub const LR_CONSISTENCY_DB: f64 = 45.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("cannot compare {left:?} with {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("SSIM needs at least {min}x{min} images, got {height}x{width}")]
    TooSmall { height: usize, width: usize, min: usize },
    #[error("SR image {sr:?} is not 4x the LR image {lr:?}")]
    ScaleRatio { sr: (usize, usize), lr: (usize, usize) },
    #[error("cannot shave {shave} pixels from a {height}x{width} image")]
    Shave { shave: usize, height: usize, width: usize },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Psnr {
    /// Decibels, [`PSNR_CAP_DB`] when `identical`.
    pub db: f64,
    /// Zero mean squared error (true PSNR is +∞).
    pub identical: bool,
}

fn psnr_from_mse(mse: f64, peak: f64) -> Psnr {
    if mse == 0.0 {
        Psnr { db: PSNR_CAP_DB, identical: true }
    } else {
        Psnr { db: 10.0 * (peak * peak / mse).log10(), identical: false }
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

pub fn psnr(a: &Plane, b: &Plane, peak: f64) -> Result<Psnr, MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::ShapeMismatch {
            left: (a.height(), a.width(), 1),
            right: (b.height(), b.width(), 1),
        });
    }
    Ok(psnr_from_mse(mse(a.as_slice(), b.as_slice()), peak))
}

/// PSNR over every sample of two images (all channels).
pub fn psnr_image(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<Psnr, MetricError> {
    let dims = |i: &ImageTensor| (i.height(), i.width(), i.channels());
    if dims(a) != dims(b) {
        return Err(MetricError::ShapeMismatch { left: dims(a), right: dims(b) });
    }
    Ok(psnr_from_mse(mse(a.as_slice(), b.as_slice()), peak))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is (H − n + 1) × (W − n + 1).
fn filter_valid(p: &Plane, taps: &[f64]) -> Plane {
    let n = taps.len();
    let (h, w) = p.dims();
    let rows = Plane::from_fn(h, w - n + 1, |y, x| taps.iter().enumerate().map(|(k, t)| t * p[(y, x + k)]).sum());
    Plane::from_fn(h - n + 1, w - n + 1, |y, x| {
        taps.iter().enumerate().map(|(k, t)| t * rows[(y + k, x)]).sum()
    })
}

/// Single-scale SSIM, 11×11 Gaussian window (σ = 1.5), averaged over all
/// positions where the window fits.
pub fn ssim(a: &Plane, b: &Plane, peak: f64) -> Result<f64, MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::ShapeMismatch {
            left: (a.height(), a.width(), 1),
            right: (b.height(), b.width(), 1),
        });
    }
    let (height, width) = a.dims();
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(MetricError::TooSmall { height, width, min: SSIM_WINDOW });
    }
    let taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mu_a = filter_valid(a, &taps);
    let mu_b = filter_valid(b, &taps);
    let aa = filter_valid(&a.zip_map(a, |x, y| x * y), &taps);
    let bb = filter_valid(&b.zip_map(b, |x, y| x * y), &taps);
    let ab = filter_valid(&a.zip_map(b, |x, y| x * y), &taps);
    let n = mu_a.as_slice().len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a.as_slice()[i], mu_b.as_slice()[i]);
        let var_a = aa.as_slice()[i] - ma * ma;
        let var_b = bb.as_slice()[i] - mb * mb;
        let cov = ab.as_slice()[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / n as f64)
}

/// PSNR over RGB between the ¼ bicubic downsample of `sr` and `lr`.
pub fn lr_psnr(sr: &ImageTensor, lr: &ImageTensor) -> Result<Psnr, MetricError> {
    if (sr.height(), sr.width()) != (4 * lr.height(), 4 * lr.width()) {
        return Err(MetricError::ScaleRatio {
            sr: (sr.height(), sr.width()),
            lr: (lr.height(), lr.width()),
        });
    }
    let down = bicubic_resize(sr, 0.25)?;
    psnr_image(&down, lr, 1.0)
}

pub fn is_lr_consistent(lr_psnr_db: f64) -> bool {
    lr_psnr_db >= LR_CONSISTENCY_DB
}

/// Drops `n` pixels from every border.
pub fn shave(p: &Plane, n: usize) -> Result<Plane, MetricError> {
    let (height, width) = p.dims();
    if 2 * n >= height || 2 * n >= width {
        return Err(MetricError::Shave { shave: n, height, width });
    }
    Ok(p.crop(n, n, height - 2 * n, width - 2 * n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub image: String,
    pub psnr_y: f64,
    pub ssim_y: f64,
    pub lr_psnr: f64,
    pub lr_consistent: bool,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str = "image,psnr_y,ssim_y,lr_psnr,lr_consistent";

    /// Scores an RGB SR output against its HR reference and LR input.
    /// `shave` crops borders before the Y-channel metrics only.
    pub fn evaluate(
        image: impl Into<String>,
        sr: &ImageTensor,
        hr: &ImageTensor,
        lr: &ImageTensor,
        shave_px: usize,
    ) -> Result<Self, MetricError> {
        let y = |img: &ImageTensor| -> Result<Plane, MetricError> {
            let plane = extract_y(img)?.channel(0);
            if shave_px == 0 {
                Ok(plane)
            } else {
                shave(&plane, shave_px)
            }
        };
        let (sr_y, hr_y) = (y(sr)?, y(hr)?);
        let lr_db = lr_psnr(sr, lr)?.db;
        Ok(Self {
            image: image.into(),
            psnr_y: psnr(&sr_y, &hr_y, 1.0)?.db,
            ssim_y: ssim(&sr_y, &hr_y, 1.0)?,
            lr_psnr: lr_db,
            lr_consistent: is_lr_consistent(lr_db),
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{:.6},{:.4},{}",
            self.image, self.psnr_y, self.ssim_y, self.lr_psnr, self.lr_consistent
        )
    }
}

/// Header, one row per record, then a `mean` row (the consistency column
/// holds the fraction of consistent images).
pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", EvalRecord::CSV_HEADER).unwrap();
    for r in records {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    let n = records.len().max(1) as f64;
    let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    writeln!(
        out,
        "mean,{:.4},{:.6},{:.4},{:.4}",
        mean(|r| r.psnr_y),
        mean(|r| r.ssim_y),
        mean(|r| r.lr_psnr),
        mean(|r| f64::from(u8::from(r.lr_consistent)))
    )
    .unwrap();
    out
}
