//! ITU-R BT.601 studio-range conversion, the convention behind MATLAB's
//! `rgb2ycbcr` and Y-channel PSNR reporting in super-resolution work.

use super::{ColorSpace, ImageTensor, ImagingError};

const OFFSET: [f64; 3] = [16.0 / 255.0, 128.0 / 255.0, 128.0 / 255.0];

const FORWARD: [[f64; 3]; 3] = [
    [65.481 / 255.0, 128.553 / 255.0, 24.966 / 255.0],
    [-37.797 / 255.0, -74.203 / 255.0, 112.0 / 255.0],
    [112.0 / 255.0, -93.786 / 255.0, -18.214 / 255.0],
];

/// Luma weights applied to RGB in [0, 1]; Y = 16/255 + Σ w_c · rgb_c.
pub const LUMA_WEIGHTS: [f64; 3] = FORWARD[0];
pub const LUMA_OFFSET: f64 = 16.0 / 255.0;

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            // cofactor of the transposed position
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

fn apply(img: &ImageTensor, m: &[[f64; 3]; 3], pre: [f64; 3], post: [f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.as_slice().len());
    for px in img.as_slice().chunks_exact(3) {
        let v = [px[0] - pre[0], px[1] - pre[1], px[2] - pre[2]];
        for (row, off) in m.iter().zip(post) {
            out.push(off + row[0] * v[0] + row[1] * v[1] + row[2] * v[2]);
        }
    }
    out
}

pub fn rgb_to_ycbcr(img: &ImageTensor) -> Result<ImageTensor, ImagingError> {
    if img.colorspace() != ColorSpace::Rgb {
        return Err(ImagingError::WrongColorspace {
            expected: "RGB",
            found: img.colorspace(),
        });
    }
    let data = apply(img, &FORWARD, [0.0; 3], OFFSET);
    ImageTensor::new(img.height(), img.width(), ColorSpace::YCbCr, data)
}

pub fn ycbcr_to_rgb(img: &ImageTensor) -> Result<ImageTensor, ImagingError> {
    if img.colorspace() != ColorSpace::YCbCr {
        return Err(ImagingError::WrongColorspace {
            expected: "YCbCr",
            found: img.colorspace(),
        });
    }
    let data = apply(img, &invert3(&FORWARD), OFFSET, [0.0; 3]);
    ImageTensor::new(img.height(), img.width(), ColorSpace::Rgb, data)
}

/// Luma plane of an RGB or YCbCr image; chroma is discarded.
pub fn extract_y(img: &ImageTensor) -> Result<ImageTensor, ImagingError> {
    let ycc = match img.colorspace() {
        ColorSpace::Y => return Err(ImagingError::AlreadyLuma),
        ColorSpace::YCbCr => img.clone(),
        ColorSpace::Rgb => rgb_to_ycbcr(img)?,
    };
    Ok(ImageTensor::from(ycc.channel(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rgb(r: f64, g: f64, b: f64) -> ImageTensor {
        ImageTensor::new(1, 1, ColorSpace::Rgb, vec![r, g, b]).unwrap()
    }

    #[test]
    fn black_white_gray() {
        let black = rgb_to_ycbcr(&rgb(0.0, 0.0, 0.0)).unwrap();
        assert!((black.get(0, 0, 0) - 16.0 / 255.0).abs() < 1e-15);
        let white = rgb_to_ycbcr(&rgb(1.0, 1.0, 1.0)).unwrap();
        assert!((white.get(0, 0, 0) - 235.0 / 255.0).abs() < 1e-12);
        assert!((white.get(0, 0, 1) - 128.0 / 255.0).abs() < 1e-12);
        assert!((white.get(0, 0, 2) - 128.0 / 255.0).abs() < 1e-12);
        let gray = rgb_to_ycbcr(&rgb(0.5, 0.5, 0.5)).unwrap();
        assert!((gray.get(0, 0, 0) - (16.0 + 219.0 * 0.5) / 255.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_in_gamut() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = ImageTensor::from_fn(9, 7, ColorSpace::Rgb, |_, _, _| rng.random());
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&img).unwrap()).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn extract_y_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageTensor::from_fn(4, 5, ColorSpace::Rgb, |_, _, _| rng.random());
        let ycc = rgb_to_ycbcr(&img).unwrap();
        let direct = extract_y(&img).unwrap();
        assert_eq!(direct, extract_y(&ycc).unwrap());
        assert_eq!(direct.channel(0), ycc.channel(0));
        assert_eq!(direct.colorspace(), ColorSpace::Y);

        let white = extract_y(&ImageTensor::filled(3, 3, ColorSpace::Rgb, 1.0)).unwrap();
        assert!(white.as_slice().iter().all(|v| (v - 235.0 / 255.0).abs() < 1e-12));

        assert!(matches!(extract_y(&direct), Err(ImagingError::AlreadyLuma)));
        assert!(matches!(
            rgb_to_ycbcr(&ycc),
            Err(ImagingError::WrongColorspace { .. })
        ));
    }
}
