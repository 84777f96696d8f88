//! Subband fidelity, adversarial, perceptual and total generator losses.

mod perceptual;

pub use perceptual::{perceptual_loss, FeatureExtractor, RandomConvFeatures};

use thiserror::Error;

use crate::autodiff::{subband, AutodiffError, L1Reduction, Tape, Var};
use crate::wavelet::{SubbandLabel, WaveletError, WaveletFilter};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("loss weights are keyed for [{found}], a {levels}-level decomposition needs [{expected}]")]
    WeightLabels {
        levels: usize,
        expected: String,
        found: String,
    },
    #[error("loss weight {name} must be finite and ≥ 0, got {value}")]
    InvalidWeight { name: String, value: f64 },
    #[error("unknown loss weight {0:?}")]
    UnknownWeight(String),
    #[error("{op}: shapes {left:?} and {right:?} differ")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{term} is not finite ({value}); training diverged")]
    NonFinite { term: &'static str, value: f32 },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Per-subband fidelity weights plus the adversarial and perceptual weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub subbands: Vec<(SubbandLabel, f64)>,
    pub adv: f64,
    pub perc: f64,
}

impl LossWeights {
    pub fn levels(&self) -> usize {
        if self.subbands.len() == SubbandLabel::for_levels(2).map_or(0, <[_]>::len) {
            2
        } else {
            1
        }
    }

    pub fn get(&self, label: SubbandLabel) -> Option<f64> {
        self.subbands.iter().find(|(l, _)| *l == label).map(|(_, w)| *w)
    }

    /// Sets `LL`, `L-HH`, …, `adv` or `perc`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), LossError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(LossError::InvalidWeight { name: name.into(), value });
        }
        match name {
            "adv" => self.adv = value,
            "perc" => self.perc = value,
            _ => {
                let slot = self
                    .subbands
                    .iter_mut()
                    .find(|(l, _)| l.as_str() == name)
                    .ok_or_else(|| LossError::UnknownWeight(name.into()))?;
                slot.1 = value;
            }
        }
        Ok(())
    }

    /// Checks that keys match a `levels`-deep decomposition and every weight
    /// is finite and non-negative.
    pub fn validate(&self, levels: usize) -> Result<(), LossError> {
        let expected = SubbandLabel::for_levels(levels)?;
        let mut keys: Vec<_> = self.subbands.iter().map(|(l, _)| *l).collect();
        let mut want = expected.to_vec();
        keys.sort();
        want.sort();
        if keys != want {
            let join = |ls: &[SubbandLabel]| ls.iter().map(|l| l.as_str()).collect::<Vec<_>>().join(",");
            return Err(LossError::WeightLabels {
                levels,
                expected: join(expected),
                found: join(&self.subbands.iter().map(|(l, _)| *l).collect::<Vec<_>>()),
            });
        }
        let named = self
            .subbands
            .iter()
            .map(|(l, w)| (l.as_str(), *w))
            .chain([("adv", self.adv), ("perc", self.perc)]);
        for (name, value) in named {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LossError::InvalidWeight { name: name.into(), value });
            }
        }
        Ok(())
    }
}

/// The published weight tables for one- and two-level decompositions.
pub fn default_weights(levels: usize) -> Result<LossWeights, LossError> {
    use SubbandLabel::*;
    let subbands = match levels {
        1 => vec![(LL, 0.1), (LH, 0.01), (HL, 0.01), (HH, 0.05)],
        2 => vec![
            (L2LL, 0.1),
            (L2LH, 0.01),
            (L2HL, 0.01),
            (L2HH, 0.05),
            (LH, 0.1),
            (HL, 0.1),
            (HH, 0.05),
        ],
        other => return Err(WaveletError::UnsupportedLevels(other).into()),
    };
    Ok(LossWeights { subbands, adv: 0.005, perc: 1.0 })
}

fn same_shape(tape: &Tape, op: &'static str, a: Var, b: Var) -> Result<(), LossError> {
    let (left, right) = (tape.value(a)?.shape(), tape.value(b)?.shape());
    if left != right {
        return Err(LossError::ShapeMismatch { op, left: left.to_vec(), right: right.to_vec() });
    }
    Ok(())
}

/// Batch mean of `Σ_j λ_j · ‖SWT(sr)_j − SWT(hr)_j‖₁` over `(B, 1, H, W)`
/// luma batches. With [`L1Reduction::Mean`] each norm is divided by the
/// subband's element count; with `Sum` it is the raw absolute sum.
pub fn swt_fidelity_loss(
    tape: &mut Tape,
    sr_y: Var,
    hr_y: Var,
    filter: &WaveletFilter,
    levels: usize,
    weights: &LossWeights,
    norm: L1Reduction,
) -> Result<Var, LossError> {
    same_shape(tape, "swt_fidelity_loss", sr_y, hr_y)?;
    weights.validate(levels)?;
    let batch = tape.value(sr_y)?.shape()[0];
    let sr = tape.swt_forward(sr_y, filter, levels)?;
    let hr = tape.swt_forward(hr_y, filter, levels)?;
    let mut total: Option<Var> = None;
    for &(label, lambda) in &weights.subbands {
        let (a, b) = (subband(&sr, label), subband(&hr, label));
        let (Some(a), Some(b)) = (a, b) else {
            unreachable!("validated labels are present in the decomposition");
        };
        let mut term = tape.l1(a, b, norm)?;
        if norm == L1Reduction::Sum {
            term = tape.scale(term, 1.0 / batch as f32)?;
        }
        let term = tape.scale(term, lambda as f32)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("every decomposition has subbands"))
}

/// Adversarial objective variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdversarialKind {
    /// `−E[log(1 − σ(D(real)))] − E[log σ(D(fake))]` for the generator.
    #[default]
    Standard,
    /// Relativistic average: each logit is taken relative to the mean logit
    /// of the other batch.
    Relativistic,
}

fn adversarial_pair(
    tape: &mut Tape,
    real: Var,
    fake: Var,
    real_target: f32,
    kind: AdversarialKind,
) -> Result<Var, LossError> {
    same_shape(tape, "adversarial loss", real, fake)?;
    let (real, fake) = match kind {
        AdversarialKind::Standard => (real, fake),
        AdversarialKind::Relativistic => {
            let mean_real = tape.mean(real)?;
            let mean_fake = tape.mean(fake)?;
            (tape.sub_broadcast(real, mean_fake)?, tape.sub_broadcast(fake, mean_real)?)
        }
    };
    let r = tape.bce_logits(real, real_target)?;
    let f = tape.bce_logits(fake, 1.0 - real_target)?;
    Ok(tape.add(r, f)?)
}

/// Generator's adversarial loss: real logits labelled 0, fake logits 1.
pub fn adversarial_generator_loss(
    tape: &mut Tape,
    real_logits: Var,
    fake_logits: Var,
    kind: AdversarialKind,
) -> Result<Var, LossError> {
    adversarial_pair(tape, real_logits, fake_logits, 0.0, kind)
}

/// Discriminator loss: real logits labelled 1, fake logits 0. Fake logits
/// should come from a detached generator output.
pub fn discriminator_loss(
    tape: &mut Tape,
    real_logits: Var,
    fake_logits: Var,
    kind: AdversarialKind,
) -> Result<Var, LossError> {
    adversarial_pair(tape, real_logits, fake_logits, 1.0, kind)
}

/// `L_G = L_fid + λ_adv·L_adv + λ_perc·L_perc`; absent terms contribute
/// nothing. Fails on any non-finite term.
pub fn total_generator_loss(
    tape: &mut Tape,
    fidelity: Var,
    adversarial: Option<Var>,
    perceptual: Option<Var>,
    weights: &LossWeights,
) -> Result<Var, LossError> {
    let check = |tape: &Tape, term: &'static str, v: Var| -> Result<(), LossError> {
        let value = tape.value(v)?.item();
        if value.is_finite() {
            Ok(())
        } else {
            Err(LossError::NonFinite { term, value })
        }
    };
    check(tape, "fidelity loss", fidelity)?;
    let mut total = fidelity;
    for (term, v, lambda) in [
        ("adversarial loss", adversarial, weights.adv),
        ("perceptual loss", perceptual, weights.perc),
    ] {
        if let Some(v) = v {
            check(tape, term, v)?;
            let scaled = tape.scale(v, lambda as f32)?;
            total = tape.add(total, scaled)?;
        }
    }
    check(tape, "generator loss", total)?;
    Ok(total)
}
