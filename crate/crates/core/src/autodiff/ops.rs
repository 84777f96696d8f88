//! Element-wise operations, reductions and scalar losses.

use super::{AutodiffError, Tape, Tensor, Var};
use crate::imaging::{LUMA_OFFSET, LUMA_WEIGHTS};

/// How an l1 distance is reduced to a scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum L1Reduction {
    /// Sum of absolute differences divided by the element count.
    #[default]
    Mean,
    /// Plain sum of absolute differences.
    Sum,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), AutodiffError> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("shape preserved")
}

fn map(a: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::new(a.shape(), a.data().iter().map(|&x| f(x)).collect()).expect("shape preserved")
}

fn stable_bce(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape("add", va, vb)?;
        let out = zip_with(va, vb, |x, y| x + y);
        self.record(
            out,
            &[a, b],
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape("sub", va, vb)?;
        let out = zip_with(va, vb, |x, y| x - y);
        self.record(
            out,
            &[a, b],
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(map(ctx.grad, |g| -g))]),
        )
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape("mul", va, vb)?;
        let out = zip_with(va, vb, |x, y| x * y);
        self.record(
            out,
            &[a, b],
            Box::new(|ctx| {
                vec![
                    ctx.needs[0].then(|| zip_with(ctx.grad, ctx.inputs[1], |g, y| g * y)),
                    ctx.needs[1].then(|| zip_with(ctx.grad, ctx.inputs[0], |g, x| g * x)),
                ]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var, AutodiffError> {
        let out = map(self.value(a)?, |x| x * factor);
        self.record(
            out,
            &[a],
            Box::new(move |ctx| vec![Some(map(ctx.grad, |g| g * factor))]),
        )
    }

    /// `x - s` where `s` is a single-element tensor broadcast over `x`.
    pub fn sub_broadcast(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        let vs = self.value(s)?;
        if vs.len() != 1 {
            return Err(AutodiffError::ShapeMismatch {
                op: "sub_broadcast",
                left: self.value(x)?.shape().to_vec(),
                right: vs.shape().to_vec(),
            });
        }
        let sv = vs.item();
        let out = map(self.value(x)?, |v| v - sv);
        self.record(
            out,
            &[x, s],
            Box::new(|ctx| {
                let total: f64 = ctx.grad.data().iter().map(|&g| f64::from(g)).sum();
                vec![
                    Some(ctx.grad.clone()),
                    Some(Tensor::full(ctx.inputs[1].shape(), -(total as f32))),
                ]
            }),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let out = self.value(x)?.reshaped(shape)?;
        self.record(
            out,
            &[x],
            Box::new(|ctx| {
                vec![Some(
                    ctx.grad
                        .reshaped(ctx.inputs[0].shape())
                        .expect("same element count"),
                )]
            }),
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Result<Var, AutodiffError> {
        let out = map(self.value(x)?, |v| if v > 0.0 { v } else { slope * v });
        self.record(
            out,
            &[x],
            Box::new(move |ctx| {
                vec![Some(zip_with(ctx.grad, ctx.inputs[0], |g, v| {
                    if v > 0.0 {
                        g
                    } else {
                        slope * g
                    }
                }))]
            }),
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.leaky_relu(x, 0.0)
    }

    /// Sum of all elements as a scalar, accumulated in `f64`.
    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let total: f64 = self.value(x)?.data().iter().map(|&v| f64::from(v)).sum();
        self.record(
            Tensor::scalar(total as f32),
            &[x],
            Box::new(|ctx| vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item()))]),
        )
    }

    /// Mean of all elements (the minibatch expectation).
    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x)?;
        let n = v.len().max(1) as f64;
        let total: f64 = v.data().iter().map(|&e| f64::from(e)).sum();
        self.record(
            Tensor::scalar((total / n) as f32),
            &[x],
            Box::new(move |ctx| {
                let g = (f64::from(ctx.grad.item()) / n) as f32;
                vec![Some(Tensor::full(ctx.inputs[0].shape(), g))]
            }),
        )
    }

    /// Scalar l1 distance. The subgradient at zero difference is 0.
    pub fn l1(&mut self, a: Var, b: Var, reduction: L1Reduction) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        same_shape("l1", va, vb)?;
        let total: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).abs())
            .sum();
        let norm = match reduction {
            L1Reduction::Mean => va.len().max(1) as f64,
            L1Reduction::Sum => 1.0,
        };
        self.record(
            Tensor::scalar((total / norm) as f32),
            &[a, b],
            Box::new(move |ctx| {
                let g = (f64::from(ctx.grad.item()) / norm) as f32;
                let sign = zip_with(ctx.inputs[0], ctx.inputs[1], |x, y| {
                    if x > y {
                        g
                    } else if x < y {
                        -g
                    } else {
                        0.0
                    }
                });
                vec![
                    ctx.needs[0].then(|| sign.clone()),
                    ctx.needs[1].then(|| map(&sign, |s| -s)),
                ]
            }),
        )
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against a constant
    /// target, in the fused form `max(z,0) - z·t + log(1 + e^-|z|)`.
    pub fn bce_logits(&mut self, logits: Var, target: f32) -> Result<Var, AutodiffError> {
        let v = self.value(logits)?;
        let n = v.len().max(1) as f64;
        let t = f64::from(target);
        let total: f64 = v.data().iter().map(|&z| stable_bce(f64::from(z), t)).sum();
        self.record(
            Tensor::scalar((total / n) as f32),
            &[logits],
            Box::new(move |ctx| {
                let g = f64::from(ctx.grad.item()) / n;
                vec![Some(map(ctx.inputs[0], |z| {
                    ((sigmoid(f64::from(z)) - t) * g) as f32
                }))]
            }),
        )
    }

    /// BT.601 studio-range luma of a `(B, 3, H, W)` RGB batch, as `(B, 1, H, W)`.
    pub fn rgb_to_y(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x)?;
        let [b, c, h, w] = v.dims4("rgb_to_y")?;
        if c != 3 {
            return Err(AutodiffError::Channels {
                op: "rgb_to_y",
                expected: 3,
                found: c,
            });
        }
        let plane = h * w;
        let weights = LUMA_WEIGHTS.map(|x| x as f32);
        let mut out = Tensor::zeros(&[b, 1, h, w]);
        for n in 0..b {
            let src = &v.data()[n * 3 * plane..(n + 1) * 3 * plane];
            let dst = &mut out.data_mut()[n * plane..(n + 1) * plane];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = LUMA_OFFSET as f32
                    + weights[0] * src[i]
                    + weights[1] * src[plane + i]
                    + weights[2] * src[2 * plane + i];
            }
        }
        self.record(
            out,
            &[x],
            Box::new(move |ctx| {
                let mut gx = Tensor::zeros(ctx.inputs[0].shape());
                let g = ctx.grad.data();
                for n in 0..b {
                    let dst = &mut gx.data_mut()[n * 3 * plane..(n + 1) * 3 * plane];
                    for (ch, wt) in weights.iter().enumerate() {
                        for i in 0..plane {
                            dst[ch * plane + i] = wt * g[n * plane + i];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
