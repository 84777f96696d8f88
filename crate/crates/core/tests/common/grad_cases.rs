//! Finite-difference audit cases, one per differentiable operation.
//!
//! Tensor-valued ops are reduced to a scalar through a fixed random projection
//! centred on the unperturbed output, `Σ r ⊙ (out − out₀)`. The gradient is
//! unchanged, but the objective stays near zero, so float32 rounding of the
//! forward pass scales with the perturbation rather than with the output.

use wgsr::autodiff::gradcheck::{check_gradients, GradReport};
use wgsr::autodiff::{AutodiffError, L1Reduction, Tape, Tensor, Var};
use wgsr::losses::{
    adversarial_generator_loss, default_weights, discriminator_loss, perceptual_loss,
    swt_fidelity_loss, AdversarialKind, FeatureExtractor, LossError,
};
use wgsr::wavelet::{make_filter, WaveletFamily};

use super::uniform;

pub const EPS: f32 = 1e-3;
/// Step for objectives at most quadratic in each single input element, where
/// central differences carry no truncation error and a large step only
/// shrinks the float32 rounding noise.
pub const EXACT_EPS: f32 = 0.1;
pub const PROBES: usize = 24;
pub const TOLERANCE: f64 = 1e-3;

pub type GraphFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>>;

pub enum Objective {
    /// Tensor-valued op, projected onto fixed random weights.
    Projected(GraphFn),
    /// Scalar-valued function (losses), checked as is.
    Scalar(GraphFn),
}

pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub objective: Objective,
    pub eps: f32,
    /// Fixed projection weights; random in `[0.5, 1.5]` when absent.
    pub projection: Option<Tensor>,
}

impl GradCase {
    pub fn projected(name: &'static str, inputs: Vec<Tensor>, f: GraphFn) -> Self {
        Self {
            name,
            inputs,
            objective: Objective::Projected(f),
            eps: EPS,
            projection: None,
        }
    }

    pub fn scalar(name: &'static str, inputs: Vec<Tensor>, f: GraphFn) -> Self {
        Self {
            name,
            inputs,
            objective: Objective::Scalar(f),
            eps: EPS,
            projection: None,
        }
    }

    fn exact(mut self) -> Self {
        self.eps = EXACT_EPS;
        self
    }

    pub fn run(&self, seed: u64) -> GradReport {
        self.run_with(seed, self.eps)
    }

    pub fn run_with(&self, seed: u64, eps: f32) -> GradReport {
        let result = match &self.objective {
            Objective::Scalar(f) => check_gradients(&self.inputs, f, PROBES, eps, seed),
            Objective::Projected(f) => {
                let base = self.base_output(f);
                let weights = match &self.projection {
                    Some(w) => w.clone(),
                    None => uniform(base.shape(), 0.5, 1.5, seed ^ 0x9e37),
                };
                let centred = |t: &mut Tape, v: &[Var]| {
                    let out = f(t, v)?;
                    let base = t.constant(base.clone());
                    let d = t.sub(out, base)?;
                    let r = t.constant(weights.clone());
                    let p = t.mul(d, r)?;
                    t.sum(p)
                };
                check_gradients(&self.inputs, centred, PROBES, eps, seed)
            }
        };
        result.unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }

    fn base_output(&self, f: &GraphFn) -> Tensor {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self
            .inputs
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        let out = f(&mut tape, &vars).unwrap_or_else(|e| panic!("{}: {e}", self.name));
        tape.value(out).unwrap().clone()
    }
}

/// Batch norm projected onto a fixed `±[1, 1.5]` pattern. Inputs and pattern
/// are redrawn until every gradient component is at least 1 in magnitude:
/// the gradient with respect to `x` is centred per channel, and near-zero
/// components would otherwise be dominated by float32 rounding.
fn batch_norm_case() -> GradCase {
    const MARGIN: f32 = 1.0;
    let shape = [3, 2, 3, 3];
    for attempt in 0..100u64 {
        let seed = 1400 + 8 * attempt;
        let inputs = vec![
            uniform(&shape, -0.25, 0.25, seed),
            uniform(&[2], 0.5, 1.5, seed + 1),
            uniform(&[2], -0.5, 0.5, seed + 2),
        ];
        let mut pattern = uniform(&shape, 1.0, 1.5, seed + 3);
        let signs = uniform(&shape, -1.0, 1.0, seed + 4);
        for (v, s) in pattern.data_mut().iter_mut().zip(signs.data()) {
            if *s < 0.0 {
                *v = -*v;
            }
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let y = tape.batch_norm(vars[0], vars[1], vars[2], 1e-5).unwrap();
        let r = tape.constant(pattern.clone());
        let p = tape.mul(y, r).unwrap();
        let total = tape.sum(p).unwrap();
        tape.backward(total).unwrap();
        let clear = vars.iter().all(|&v| {
            tape.grad(v).unwrap().unwrap().data().iter().all(|g| g.abs() >= MARGIN)
        });
        if clear {
            let mut case = GradCase::projected(
                "batch_norm",
                inputs,
                Box::new(|t, v| t.batch_norm(v[0], v[1], v[2], 1e-5)),
            );
            case.projection = Some(pattern);
            return case;
        }
    }
    panic!("no well-conditioned batch-norm input found");
}

/// Values bounded away from zero, so leaky/abs kinks stay outside ±EPS.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut t = uniform(shape, 0.1, 1.0, seed);
    let signs = uniform(shape, -1.0, 1.0, seed + 1);
    for (v, s) in t.data_mut().iter_mut().zip(signs.data()) {
        if *s < 0.0 {
            *v = -*v;
        }
    }
    t
}

pub fn autodiff_cases() -> Vec<GradCase> {
    let sym7 = make_filter(WaveletFamily::Sym7);
    let haar = make_filter(WaveletFamily::Haar);
    vec![
        GradCase::projected(
            "conv2d 3x3 stride 1",
            vec![
                uniform(&[2, 2, 6, 6], 0.0, 1.0, 1),
                uniform(&[3, 2, 3, 3], -0.2, 0.6, 2),
                uniform(&[3], -0.5, 0.5, 3),
            ],
            Box::new(|t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
                Ok(y)
            }),
        )
        .exact(),
        GradCase::projected(
            "conv2d 4x4 stride 2",
            vec![
                uniform(&[2, 3, 8, 8], 0.0, 1.0, 4),
                // few taps cover each input; positive weights keep every
                // input gradient clear of zero
                uniform(&[2, 3, 4, 4], 0.05, 0.6, 5),
            ],
            Box::new(|t, v| {
                let y = t.conv2d(v[0], v[1], None, 2, 1)?;
                Ok(y)
            }),
        )
        .exact(),
        GradCase::projected(
            "linear",
            vec![
                uniform(&[3, 5], 0.0, 1.0, 6),
                uniform(&[8, 5], -0.1, 0.6, 7),
                uniform(&[8], -0.5, 0.5, 8),
            ],
            Box::new(|t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                Ok(y)
            }),
        )
        .exact(),
        GradCase::projected(
            "leaky_relu",
            vec![away_from_zero(&[2, 3, 4, 4], 9)],
            Box::new(|t, v| {
                let y = t.leaky_relu(v[0], 0.2)?;
                Ok(y)
            }),
        ),
        batch_norm_case(),
        GradCase::projected(
            "concat_channels + nearest_upsample",
            vec![
                uniform(&[2, 1, 3, 3], -1.0, 1.0, 18),
                uniform(&[2, 2, 3, 3], -1.0, 1.0, 19),
            ],
            Box::new(|t, v| {
                let c = t.concat_channels(&[v[0], v[1]])?;
                let u = t.nearest_upsample(c, 2)?;
                Ok(u)
            }),
        )
        .exact(),
        GradCase::projected(
            "mean + mul + sub_broadcast",
            vec![
                // a − mean(b) ≥ 1.5 and b ≤ −0.5 bound both gradients away from zero
                uniform(&[2, 5], 1.0, 2.0, 21),
                uniform(&[2, 5], -1.0, -0.5, 22),
            ],
            Box::new(|t, v| {
                let m = t.mean(v[1])?;
                let d = t.sub_broadcast(v[0], m)?;
                let p = t.mul(d, v[1])?;
                Ok(p)
            }),
        )
        .exact(),
        GradCase::projected(
            "rgb_to_y",
            vec![uniform(&[2, 3, 4, 4], 0.0, 1.0, 24)],
            Box::new(|t, v| {
                let y = t.rgb_to_y(v[0])?;
                Ok(y)
            }),
        )
        .exact(),
        GradCase::projected(
            "swt level 1 (sym7)",
            vec![uniform(&[2, 1, 14, 16], 0.0, 1.0, 26)],
            Box::new(move |t, v| {
                let bands = t.swt_forward(v[0], &sym7, 1)?;
                let parts: Vec<Var> = bands.iter().map(|(_, b)| *b).collect();
                let c = t.concat_channels(&parts)?;
                Ok(c)
            }),
        )
        .exact(),
        GradCase::projected(
            "swt level 2 (haar)",
            vec![uniform(&[1, 1, 8, 10], 0.0, 1.0, 28)],
            Box::new(move |t, v| {
                let bands = t.swt_forward(v[0], &haar, 2)?;
                let parts: Vec<Var> = bands.iter().map(|(_, b)| *b).collect();
                let c = t.concat_channels(&parts)?;
                Ok(c)
            }),
        )
        .exact(),
        GradCase::scalar(
            "l1 (mean)",
            vec![
                uniform(&[2, 3, 3], 0.0, 1.0, 30),
                uniform(&[2, 3, 3], 1.1, 2.0, 31),
            ],
            Box::new(|t, v| t.l1(v[0], v[1], L1Reduction::Mean)),
        ),
        GradCase::scalar(
            "bce_logits",
            vec![uniform(&[6], -3.0, 3.0, 32)],
            Box::new(|t, v| t.bce_logits(v[0], 1.0)),
        ),
        composite_case(),
    ]
}

fn composite_case() -> GradCase {
    let inputs = vec![
        uniform(&[1, 2, 5, 5], 0.0, 1.0, 33),
        uniform(&[2, 2, 3, 3], -0.2, 0.6, 34),
        uniform(&[2], -2.0, -1.5, 35),
    ];
    let mut tape = Tape::new();
    let v: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let y = tape.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap();
    let a = tape.leaky_relu(y, 0.2).unwrap();
    let pre = tape.value(y).unwrap().clone();
    // A target just off the activations keeps the loss value (and its float32
    // rounding) small while the l1 kink stays out of reach.
    let offsets = uniform(pre.shape(), 0.02, 0.05, 36);
    let mut target = tape.value(a).unwrap().clone();
    for (t, o) in target.data_mut().iter_mut().zip(offsets.data()) {
        *t -= o;
    }
    // Every pre-activation coefficient is ≤ 1, so a probe moves it by ≤ EPS.
    let margin = pre.data().iter().map(|p| p.abs()).fold(f32::MAX, f32::min);
    assert!(
        margin > 3.0 * EPS,
        "composite case sits on a kink (margin {margin})"
    );
    assert!(pre.data().iter().any(|&p| p < 0.0) && pre.data().iter().any(|&p| p > 0.0));

    GradCase::scalar(
        "conv -> leaky_relu -> l1 composite",
        inputs,
        Box::new(move |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            let a = t.leaky_relu(y, 0.2)?;
            let target = t.constant(target.clone());
            t.l1(a, target, L1Reduction::Mean)
        }),
    )
}

/// `D + A(−1)^y + B(−1)^x + C(−1)^(x+y)`: alternating patterns are
/// eigenvectors of every circular filter, so each level-1 subband of this
/// field has constant magnitude and no subband sits near the l1 kink.
pub fn alternating_field(shape: &[usize], [d, a, b, c]: [f32; 4]) -> Tensor {
    let (h, w) = (shape[2], shape[3]);
    Tensor::from_fn(shape, |i| {
        let (y, x) = ((i / w) % h, i % w);
        let s = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        d + a * s(y) + b * s(x) + c * s(x + y)
    })
}

/// Conv features with non-negative weights: monotone in the input, so a
/// positive offset between the two images fixes the sign of every feature
/// difference.
pub struct PositiveFeatures {
    weights: Vec<Tensor>,
}

impl PositiveFeatures {
    pub fn new(seed: u64) -> Self {
        Self {
            weights: vec![
                uniform(&[4, 3, 3, 3], 0.05, 0.3, seed),
                uniform(&[6, 4, 3, 3], 0.05, 0.3, seed + 1),
            ],
        }
    }
}

impl FeatureExtractor for PositiveFeatures {
    fn features(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>, LossError> {
        let mut h = x;
        let mut out = Vec::new();
        for (i, w) in self.weights.iter().enumerate() {
            let w = tape.constant(w.clone());
            let c = tape.conv2d(h, w, None, if i == 0 { 1 } else { 2 }, 1)?;
            h = tape.leaky_relu(c, 0.2)?;
            out.push(h);
        }
        Ok(out)
    }
}

fn lift<T>(r: Result<T, LossError>) -> Result<T, AutodiffError> {
    r.map_err(|e| match e {
        LossError::Autodiff(e) => e,
        other => AutodiffError::InvalidArgument(other.to_string()),
    })
}

pub fn loss_cases() -> Vec<GradCase> {
    let filter = make_filter(WaveletFamily::Sym7);
    let weights = default_weights(1).unwrap();
    let hr = uniform(&[2, 1, 14, 14], 0.0, 1.0, 40);
    let delta = alternating_field(hr.shape(), [0.01, 0.01, -0.012, 0.015]);
    let mut sr = hr.clone();
    for (s, d) in sr.data_mut().iter_mut().zip(delta.data()) {
        *s += d;
    }
    let set = wgsr::wavelet::swt2_forward(
        &wgsr::Plane::from_fn(14, 14, |y, x| f64::from(delta.data()[y * 14 + x])),
        &filter,
        1,
    )
    .unwrap();
    let margin = set
        .iter()
        .flat_map(|(_, p)| p.as_slice().iter().map(|v| v.abs()))
        .fold(f64::MAX, f64::min);
    // a probe moves each subband sample by at most EPS·max|lo|·max|hi| < EPS
    assert!(
        margin > 10.0 * f64::from(EPS),
        "fidelity case margin {margin}"
    );

    // Positive inputs keep every pre-activation clear of the leaky kink; an
    // offset above 2·EPS keeps sr > hr under any single probe.
    let hr_rgb = uniform(&[1, 3, 6, 6], 0.1, 0.5, 41);
    let mut sr_rgb = hr_rgb.clone();
    sr_rgb.data_mut().iter_mut().for_each(|v| *v += 0.02);

    let adv_fixtures = || {
        vec![
            uniform(&[3, 1], -2.0, 2.0, 42),
            uniform(&[3, 1], -2.0, 2.0, 43),
        ]
    };
    let mut cases = vec![GradCase::scalar(
        "swt fidelity loss (sym7, level 1)",
        vec![sr],
        Box::new(move |t, v| {
            let hr = t.constant(hr.clone());
            lift(swt_fidelity_loss(
                t,
                v[0],
                hr,
                &filter,
                1,
                &weights,
                L1Reduction::Mean,
            ))
        }),
    )];
    for kind in [AdversarialKind::Standard, AdversarialKind::Relativistic] {
        cases.push(GradCase::scalar(
            if kind == AdversarialKind::Standard {
                "adversarial generator loss"
            } else {
                "adversarial generator loss (relativistic)"
            },
            adv_fixtures(),
            Box::new(move |t, v| lift(adversarial_generator_loss(t, v[0], v[1], kind))),
        ));
        cases.push(GradCase::scalar(
            if kind == AdversarialKind::Standard {
                "discriminator loss"
            } else {
                "discriminator loss (relativistic)"
            },
            adv_fixtures(),
            Box::new(move |t, v| lift(discriminator_loss(t, v[0], v[1], kind))),
        ));
    }
    let extractor = PositiveFeatures::new(44);
    cases.push(GradCase::scalar(
        "perceptual loss",
        vec![sr_rgb, hr_rgb],
        Box::new(move |t, v| lift(perceptual_loss(t, v[0], v[1], &extractor))),
    ));
    cases
}
