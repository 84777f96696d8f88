use std::fmt;
use std::str::FromStr;

use super::{WaveletError, WaveletFilter};
use crate::plane::Plane;

/// Deepest supported decomposition.
pub const MAX_LEVELS: usize = 2;

/// Name of one subband plane. `L2*` variants are the second-level split of the
/// first-level LL plane, printed as `L-LL`, `L-LH`, ...
///
/// LH is low-pass along the width and high-pass along the height (horizontal
/// detail); HL is the transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubbandLabel {
    LL,
    LH,
    HL,
    HH,
    L2LL,
    L2LH,
    L2HL,
    L2HH,
}

impl SubbandLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SubbandLabel::LL => "LL",
            SubbandLabel::LH => "LH",
            SubbandLabel::HL => "HL",
            SubbandLabel::HH => "HH",
            SubbandLabel::L2LL => "L-LL",
            SubbandLabel::L2LH => "L-LH",
            SubbandLabel::L2HL => "L-HL",
            SubbandLabel::L2HH => "L-HH",
        }
    }

    /// Labels in canonical order for a decomposition of the given depth.
    pub fn for_levels(levels: usize) -> Result<&'static [SubbandLabel], WaveletError> {
        use SubbandLabel::*;
        match levels {
            1 => Ok(&[LL, LH, HL, HH]),
            2 => Ok(&[L2LL, L2LH, L2HL, L2HH, LH, HL, HH]),
            other => Err(WaveletError::UnsupportedLevels(other)),
        }
    }

    pub const DETAILS: [SubbandLabel; 3] = [SubbandLabel::LH, SubbandLabel::HL, SubbandLabel::HH];
}

impl fmt::Display for SubbandLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubbandLabel {
    type Err = WaveletError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use SubbandLabel::*;
        [LL, LH, HL, HH, L2LL, L2LH, L2HL, L2HH]
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| WaveletError::UnknownSubband(s.to_string()))
    }
}

/// Undecimated decomposition of one plane: every subband keeps the source size.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    levels: usize,
    height: usize,
    width: usize,
    subbands: Vec<(SubbandLabel, Plane)>,
}

impl SubbandSet {
    /// Assembles a set from labelled planes, in any order. The labels must be
    /// exactly those of a `levels`-deep decomposition and all planes must share
    /// one size.
    pub fn from_parts(
        levels: usize,
        mut parts: Vec<(SubbandLabel, Plane)>,
    ) -> Result<Self, WaveletError> {
        let labels = SubbandLabel::for_levels(levels)?;
        if parts.len() != labels.len() {
            return Err(WaveletError::SubbandMismatch {
                levels,
                found: parts.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(","),
            });
        }
        let mut ordered = Vec::with_capacity(labels.len());
        for &label in labels {
            let pos = parts.iter().position(|(l, _)| *l == label).ok_or_else(|| {
                WaveletError::SubbandMismatch {
                    levels,
                    found: parts.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(","),
                }
            })?;
            ordered.push(parts.swap_remove(pos));
        }
        let (height, width) = ordered[0].1.dims();
        if let Some((label, p)) = ordered.iter().find(|(_, p)| p.dims() != (height, width)) {
            return Err(WaveletError::SubbandSize {
                label: label.as_str(),
                expected: (height, width),
                found: p.dims(),
            });
        }
        Ok(Self {
            levels,
            height,
            width,
            subbands: ordered,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.subbands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subbands.is_empty()
    }

    pub fn get(&self, label: SubbandLabel) -> Option<&Plane> {
        self.subbands
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, p)| p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubbandLabel, &Plane)> {
        self.subbands.iter().map(|(l, p)| (*l, p))
    }

    pub fn labels(&self) -> impl Iterator<Item = SubbandLabel> + '_ {
        self.subbands.iter().map(|(l, _)| *l)
    }

    /// Subband-wise combination with another set of the same layout.
    pub fn zip_map(
        &self,
        other: &SubbandSet,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<SubbandSet, WaveletError> {
        if self.levels != other.levels || self.dims() != other.dims() {
            return Err(WaveletError::SubbandMismatch {
                levels: self.levels,
                found: format!("{} levels, {:?}", other.levels, other.dims()),
            });
        }
        Ok(SubbandSet {
            levels: self.levels,
            height: self.height,
            width: self.width,
            subbands: self
                .subbands
                .iter()
                .zip(&other.subbands)
                .map(|((l, a), (_, b))| (*l, a.zip_map(b, &f)))
                .collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Axis {
    /// Filter along the width (within each row).
    Width,
    /// Filter along the height (within each column).
    Height,
}

/// Periodic filtering `out[n] = Σ_k taps[k] · in[(n + shift - k·dilation) mod N]`
/// along one axis. With `shift = 0` this is circular convolution with the
/// zero-upsampled filter. The adjoint of this operator is the same operator with
/// reversed taps and `shift' = (len - 1)·dilation - shift`.
pub(crate) fn circular_filter(
    input: &Plane,
    taps: &[f64],
    dilation: usize,
    shift: usize,
    axis: Axis,
) -> Plane {
    let (h, w) = input.dims();
    let n = match axis {
        Axis::Width => w,
        Axis::Height => h,
    };
    // offsets[k] = (shift - k·dilation) mod n, kept in [0, n)
    let offsets: Vec<usize> = (0..taps.len())
        .map(|k| {
            let back = (k * dilation) % n;
            (shift % n + n - back) % n
        })
        .collect();
    let src = input.as_slice();
    let mut out = Plane::zeros(h, w);
    let dst = out.as_mut_slice();
    match axis {
        Axis::Width => {
            for y in 0..h {
                let row = &src[y * w..(y + 1) * w];
                let out_row = &mut dst[y * w..(y + 1) * w];
                for (x, o) in out_row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (t, off) in taps.iter().zip(&offsets) {
                        let mut i = x + off;
                        if i >= w {
                            i -= w;
                        }
                        acc += t * row[i];
                    }
                    *o = acc;
                }
            }
        }
        Axis::Height => {
            for y in 0..h {
                let out_row = &mut dst[y * w..(y + 1) * w];
                for (t, off) in taps.iter().zip(&offsets) {
                    let mut sy = y + off;
                    if sy >= h {
                        sy -= h;
                    }
                    let row = &src[sy * w..(sy + 1) * w];
                    for (o, v) in out_row.iter_mut().zip(row) {
                        *o += t * v;
                    }
                }
            }
        }
    }
    out
}

fn check_input(plane: &Plane, filter: &WaveletFilter, levels: usize) -> Result<(), WaveletError> {
    SubbandLabel::for_levels(levels)?;
    let (h, w) = plane.dims();
    if h < filter.len() || w < filter.len() {
        return Err(WaveletError::ImageTooSmall {
            height: h,
            width: w,
            filter: filter.name(),
            taps: filter.len(),
        });
    }
    Ok(())
}

/// One undecimated analysis step with filters dilated by `dilation`.
/// Returns `[LL, LH, HL, HH]`.
pub(crate) fn analysis_step(plane: &Plane, filter: &WaveletFilter, dilation: usize) -> [Plane; 4] {
    let lo_w = circular_filter(plane, &filter.dec_lo, dilation, 0, Axis::Width);
    let hi_w = circular_filter(plane, &filter.dec_hi, dilation, 0, Axis::Width);
    [
        circular_filter(&lo_w, &filter.dec_lo, dilation, 0, Axis::Height),
        circular_filter(&lo_w, &filter.dec_hi, dilation, 0, Axis::Height),
        circular_filter(&hi_w, &filter.dec_lo, dilation, 0, Axis::Height),
        circular_filter(&hi_w, &filter.dec_hi, dilation, 0, Axis::Height),
    ]
}

fn synthesis_step(
    [ll, lh, hl, hh]: [&Plane; 4],
    filter: &WaveletFilter,
    dilation: usize,
) -> Plane {
    let delay = (filter.len() - 1) * dilation;
    let recon = |a: &Plane, b: &Plane, axis| {
        let mut out = circular_filter(a, &filter.rec_lo, dilation, delay, axis);
        let hi = circular_filter(b, &filter.rec_hi, dilation, delay, axis);
        for (o, v) in out.as_mut_slice().iter_mut().zip(hi.as_slice()) {
            *o += v;
        }
        out
    };
    let lo_w = recon(ll, lh, Axis::Height);
    let hi_w = recon(hl, hh, Axis::Height);
    recon(&lo_w, &hi_w, Axis::Width).map(|v| 0.25 * v)
}

/// Forward stationary wavelet transform with periodic extension.
pub fn swt2_forward(
    plane: &Plane,
    filter: &WaveletFilter,
    levels: usize,
) -> Result<SubbandSet, WaveletError> {
    check_input(plane, filter, levels)?;
    let [ll, lh, hl, hh] = analysis_step(plane, filter, 1);
    let parts = if levels == 1 {
        vec![
            (SubbandLabel::LL, ll),
            (SubbandLabel::LH, lh),
            (SubbandLabel::HL, hl),
            (SubbandLabel::HH, hh),
        ]
    } else {
        let [l2ll, l2lh, l2hl, l2hh] = analysis_step(&ll, filter, 2);
        vec![
            (SubbandLabel::L2LL, l2ll),
            (SubbandLabel::L2LH, l2lh),
            (SubbandLabel::L2HL, l2hl),
            (SubbandLabel::L2HH, l2hh),
            (SubbandLabel::LH, lh),
            (SubbandLabel::HL, hl),
            (SubbandLabel::HH, hh),
        ]
    };
    let (height, width) = plane.dims();
    Ok(SubbandSet {
        levels,
        height,
        width,
        subbands: parts,
    })
}

/// Inverse of [`swt2_forward`] for the same filter.
pub fn swt2_inverse(set: &SubbandSet, filter: &WaveletFilter) -> Result<Plane, WaveletError> {
    let labels = SubbandLabel::for_levels(set.levels)?;
    let band = |label: SubbandLabel| {
        set.get(label).ok_or_else(|| WaveletError::SubbandMismatch {
            levels: set.levels,
            found: set.labels().map(|l| l.as_str()).collect::<Vec<_>>().join(","),
        })
    };
    if set.len() != labels.len() {
        return Err(WaveletError::SubbandMismatch {
            levels: set.levels,
            found: set.labels().map(|l| l.as_str()).collect::<Vec<_>>().join(","),
        });
    }
    let details = [
        band(SubbandLabel::LH)?,
        band(SubbandLabel::HL)?,
        band(SubbandLabel::HH)?,
    ];
    let ll = match set.levels {
        1 => band(SubbandLabel::LL)?.clone(),
        _ => synthesis_step(
            [
                band(SubbandLabel::L2LL)?,
                band(SubbandLabel::L2LH)?,
                band(SubbandLabel::L2HL)?,
                band(SubbandLabel::L2HH)?,
            ],
            filter,
            2,
        ),
    };
    Ok(synthesis_step(
        [&ll, details[0], details[1], details[2]],
        filter,
        1,
    ))
}
