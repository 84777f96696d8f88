use crate::autodiff::{L1Reduction, ParamSet, Tape, Var};
use crate::models::{init_rng, Conv, ConvSpec};

use super::{same_shape, LossError};

/// Frozen feature network for the perceptual term.
pub trait FeatureExtractor {
    /// Feature maps of a `(B, 3, H, W)` batch, parameters recorded frozen.
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>, LossError>;
}

/// Three seeded random conv stages (stride 1, 2, 2) with leaky ReLU.
pub struct RandomConvFeatures {
    params: ParamSet,
    convs: Vec<Conv>,
    slope: f32,
}

impl RandomConvFeatures {
    pub const WIDTHS: [usize; 3] = [16, 32, 64];

    pub fn new(seed: u64) -> Self {
        let mut rng = init_rng(seed);
        let mut params = ParamSet::new();
        let mut inputs = 3;
        let convs = Self::WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &outputs)| {
                let stride = if i == 0 { 1 } else { 2 };
                let spec = ConvSpec { inputs, outputs, kernel: 3, stride, bias: true, gain: 1.0 };
                inputs = outputs;
                Conv::new(&mut params, &format!("p.conv{i}"), spec, &mut rng)
            })
            .collect();
        Self { params, convs, slope: 0.2 }
    }

    /// Same network with the first stage passing the three input channels
    /// straight through (centre tap 1, everything else 0).
    pub fn with_identity_first(seed: u64) -> Self {
        let mut f = Self::new(seed);
        let w = f.params.get_mut(f.convs[0].weight);
        let [outputs, inputs, k, _] = w.dims4("identity").expect("conv weight is rank 4");
        w.data_mut().fill(0.0);
        for c in 0..inputs.min(outputs) {
            let centre = ((c * inputs + c) * k + k / 2) * k + k / 2;
            w.data_mut()[centre] = 1.0;
        }
        f
    }
}

impl FeatureExtractor for RandomConvFeatures {
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>, LossError> {
        let p = self.params.bind(tape, false);
        let mut h = x;
        let mut out = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let c = conv.apply(tape, &p, h)?;
            h = tape.leaky_relu(c, self.slope)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Mean absolute difference over all feature maps of both inputs.
pub fn perceptual_loss(
    tape: &mut Tape,
    sr: Var,
    hr: Var,
    extractor: &dyn FeatureExtractor,
) -> Result<Var, LossError> {
    same_shape(tape, "perceptual_loss", sr, hr)?;
    let fa = extractor.features(tape, sr)?;
    let fb = extractor.features(tape, hr)?;
    let mut count = 0usize;
    let mut total: Option<Var> = None;
    for (&a, &b) in fa.iter().zip(&fb) {
        count += tape.value(a)?.len();
        let d = tape.l1(a, b, L1Reduction::Sum)?;
        total = Some(match total {
            Some(t) => tape.add(t, d)?,
            None => d,
        });
    }
    let total = total.expect("extractors produce at least one feature map");
    Ok(tape.scale(total, 1.0 / count.max(1) as f32)?)
}
