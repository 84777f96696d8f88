//! Differentiable stationary wavelet transform over `(B, 1, H, W)` batches.
//!
//! Values are computed by the `f64` wavelet engine per batch item; the
//! backward rule is the adjoint filter (time-reversed taps under the same
//! periodic extension).

use std::sync::Arc;

use super::{AutodiffError, Tape, Tensor, Var};
use crate::plane::Plane;
use crate::wavelet::{circular_filter, Axis, SubbandLabel, WaveletError, WaveletFilter};

/// Subband variables in canonical label order.
pub type DiffSubbands = Vec<(SubbandLabel, Var)>;

struct SeparableFilter {
    width_taps: Vec<f64>,
    height_taps: Vec<f64>,
    dilation: usize,
}

impl SeparableFilter {
    fn apply(&self, p: &Plane) -> Plane {
        let tmp = circular_filter(p, &self.width_taps, self.dilation, 0, Axis::Width);
        circular_filter(&tmp, &self.height_taps, self.dilation, 0, Axis::Height)
    }

    fn adjoint(&self, p: &Plane) -> Plane {
        let rev = |t: &[f64]| t.iter().rev().copied().collect::<Vec<_>>();
        let shift = (self.width_taps.len() - 1) * self.dilation;
        let tmp = circular_filter(p, &rev(&self.height_taps), self.dilation, shift, Axis::Height);
        circular_filter(&tmp, &rev(&self.width_taps), self.dilation, shift, Axis::Width)
    }
}

fn map_batch(t: &Tensor, f: impl Fn(&Plane) -> Plane) -> Tensor {
    let [b, _, h, w] = t.dims4("swt").expect("checked rank");
    let plane = h * w;
    let mut out = Tensor::zeros(t.shape());
    for n in 0..b {
        let src = &t.data()[n * plane..(n + 1) * plane];
        let p = Plane::from_vec(h, w, src.iter().map(|&v| f64::from(v)).collect());
        let r = f(&p);
        for (d, s) in out.data_mut()[n * plane..(n + 1) * plane].iter_mut().zip(r.as_slice()) {
            *d = *s as f32;
        }
    }
    out
}

impl Tape {
    fn separable_filter(&mut self, x: Var, op: Arc<SeparableFilter>) -> Result<Var, AutodiffError> {
        let out = map_batch(self.value(x)?, |p| op.apply(p));
        self.record(
            out,
            &[x],
            Box::new(move |ctx| vec![Some(map_batch(ctx.grad, |p| op.adjoint(p)))]),
        )
    }

    fn analysis_step_diff(
        &mut self,
        x: Var,
        filter: &WaveletFilter,
        dilation: usize,
    ) -> Result<[Var; 4], AutodiffError> {
        let mk = |w: &[f64], h: &[f64]| {
            Arc::new(SeparableFilter {
                width_taps: w.to_vec(),
                height_taps: h.to_vec(),
                dilation,
            })
        };
        let (lo, hi) = (&filter.dec_lo, &filter.dec_hi);
        Ok([
            self.separable_filter(x, mk(lo, lo))?,
            self.separable_filter(x, mk(lo, hi))?,
            self.separable_filter(x, mk(hi, lo))?,
            self.separable_filter(x, mk(hi, hi))?,
        ])
    }

    /// Forward SWT of a `(B, 1, H, W)` batch; returns one `(B, 1, H, W)`
    /// variable per subband, labelled as in [`crate::wavelet::swt2_forward`].
    pub fn swt_forward(
        &mut self,
        x: Var,
        filter: &WaveletFilter,
        levels: usize,
    ) -> Result<DiffSubbands, AutodiffError> {
        let v = self.value(x)?;
        let [_, c, h, w] = v.dims4("swt_forward")?;
        if c != 1 {
            return Err(AutodiffError::Channels {
                op: "swt_forward",
                expected: 1,
                found: c,
            });
        }
        SubbandLabel::for_levels(levels)?;
        if h < filter.len() || w < filter.len() {
            return Err(WaveletError::ImageTooSmall {
                height: h,
                width: w,
                filter: filter.name(),
                taps: filter.len(),
            }
            .into());
        }
        let [ll, lh, hl, hh] = self.analysis_step_diff(x, filter, 1)?;
        if levels == 1 {
            return Ok(vec![
                (SubbandLabel::LL, ll),
                (SubbandLabel::LH, lh),
                (SubbandLabel::HL, hl),
                (SubbandLabel::HH, hh),
            ]);
        }
        let [l2ll, l2lh, l2hl, l2hh] = self.analysis_step_diff(ll, filter, 2)?;
        Ok(vec![
            (SubbandLabel::L2LL, l2ll),
            (SubbandLabel::L2LH, l2lh),
            (SubbandLabel::L2HL, l2hl),
            (SubbandLabel::L2HH, l2hh),
            (SubbandLabel::LH, lh),
            (SubbandLabel::HL, hl),
            (SubbandLabel::HH, hh),
        ])
    }
}

/// Looks up a subband by label.
pub fn subband(bands: &DiffSubbands, label: SubbandLabel) -> Option<Var> {
    bands.iter().find(|(l, _)| *l == label).map(|(_, v)| *v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{make_filter, swt2_forward, WaveletFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn values_match_engine() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = make_filter(WaveletFamily::Sym7);
        let (b, h, w) = (2, 16, 18);
        let x = Tensor::from_fn(&[b, 1, h, w], |_| rng.random::<f32>());
        for levels in 1..=2 {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let bands = tape.swt_forward(xv, &f, levels).unwrap();
            for n in 0..b {
                let p = Plane::from_vec(
                    h,
                    w,
                    x.data()[n * h * w..(n + 1) * h * w].iter().map(|&v| f64::from(v)).collect(),
                );
                let set = swt2_forward(&p, &f, levels).unwrap();
                for (label, var) in &bands {
                    let got = &tape.value(*var).unwrap().data()[n * h * w..(n + 1) * h * w];
                    let want = set.get(*label).unwrap();
                    for (g, e) in got.iter().zip(want.as_slice()) {
                        assert!((f64::from(*g) - e).abs() < 1e-5, "{label}");
                    }
                }
            }
        }
    }

    #[test]
    fn ll_gradient_is_input_independent() {
        let f = make_filter(WaveletFamily::Db7);
        let grad_for = |x: Tensor| {
            let mut tape = Tape::new();
            let xv = tape.param(x);
            let bands = tape.swt_forward(xv, &f, 1).unwrap();
            let s = tape.sum(subband(&bands, SubbandLabel::LL).unwrap()).unwrap();
            tape.backward(s).unwrap();
            tape.grad(xv).unwrap().unwrap().clone()
        };
        let a = grad_for(Tensor::full(&[1, 1, 16, 16], 0.3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = grad_for(Tensor::from_fn(&[1, 1, 16, 16], |_| rng.random()));
        assert_eq!(a, b);
        // Σ LL = (Σ h)² Σ x, so every input sample receives (√2)² = 2
        assert!(a.data().iter().all(|&g| (g - 2.0).abs() < 1e-5));
    }

    #[test]
    fn rejects_multichannel_and_small() {
        let f = make_filter(WaveletFamily::Sym7);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 3, 16, 16]));
        assert!(matches!(
            tape.swt_forward(x, &f, 1),
            Err(AutodiffError::Channels { .. })
        ));
        let y = tape.constant(Tensor::zeros(&[1, 1, 8, 16]));
        assert!(matches!(
            tape.swt_forward(y, &f, 1),
            Err(AutodiffError::Wavelet(WaveletError::ImageTooSmall { .. }))
        ));
        let z = tape.constant(Tensor::zeros(&[1, 1, 16, 16]));
        assert!(tape.swt_forward(z, &f, 3).is_err());
    }
}
