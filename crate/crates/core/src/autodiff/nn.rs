//! Layer primitives: convolution, dense layers, batch normalization, channel
//! concatenation and nearest-neighbour upsampling.

use super::{AutodiffError, Tape, Tensor, Var};

/// Row-major strided `C = A·B + beta·C` for `A: m×k`, `B: k×n`, `C: m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches for the
    // given dimensions and strides; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Writes the `(C·k·k) × (Ho·Wo)` patch matrix of one image.
    fn im2col(&self, img: &[f32], cols: &mut [f32]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let n = self.positions();
        for c in 0..self.channels {
            let src = &img[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..k {
                for j in 0..k {
                    let row = &mut cols[((c * k + i) * k + j) * n..][..n];
                    for oy in 0..self.out_h {
                        let y = (oy * s + i) as isize - p as isize;
                        let dst = &mut row[oy * self.out_w..(oy + 1) * self.out_w];
                        if y < 0 || y >= self.height as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let line = &src[y as usize * self.width..(y as usize + 1) * self.width];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = (ox * s + j) as isize - p as isize;
                            *d = if x < 0 || x >= self.width as isize {
                                0.0
                            } else {
                                line[x as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a patch matrix back onto one image gradient.
    fn col2im(&self, cols: &[f32], img: &mut [f32]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let n = self.positions();
        for c in 0..self.channels {
            let dst = &mut img[c * self.height * self.width..(c + 1) * self.height * self.width];
            for i in 0..k {
                for j in 0..k {
                    let row = &cols[((c * k + i) * k + j) * n..][..n];
                    for oy in 0..self.out_h {
                        let y = (oy * s + i) as isize - p as isize;
                        if y < 0 || y >= self.height as isize {
                            continue;
                        }
                        let line = &mut dst[y as usize * self.width..(y as usize + 1) * self.width];
                        for ox in 0..self.out_w {
                            let x = (ox * s + j) as isize - p as isize;
                            if x >= 0 && x < self.width as isize {
                                line[x as usize] += row[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    /// 2-D cross-correlation with zero padding. `input: (B, C, H, W)`,
    /// `weight: (O, C, k, k)`, optional `bias: (O)`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(input)?;
        let w = self.value(weight)?;
        let [batch, channels, height, width] = x.dims4("conv2d")?;
        let [out_c, w_c, kh, kw] = w.dims4("conv2d")?;
        if w_c != channels || kh != kw || stride == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        if let Some(b) = bias {
            let vb = self.value(b)?;
            if vb.shape() != [out_c] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "conv2d bias",
                    left: w.shape().to_vec(),
                    right: vb.shape().to_vec(),
                });
            }
        }
        if height + 2 * padding < kh || width + 2 * padding < kw {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d (input smaller than kernel)",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let geom = ConvGeom {
            channels,
            height,
            width,
            kernel: kh,
            stride,
            padding,
            out_h: (height + 2 * padding - kh) / stride + 1,
            out_w: (width + 2 * padding - kw) / stride + 1,
        };
        let (patch, npos) = (geom.patch(), geom.positions());
        let mut out = Tensor::zeros(&[batch, out_c, geom.out_h, geom.out_w]);
        let mut cols = vec![0.0f32; patch * npos];
        let in_stride = channels * height * width;
        for b in 0..batch {
            geom.im2col(&x.data()[b * in_stride..(b + 1) * in_stride], &mut cols);
            let dst = &mut out.data_mut()[b * out_c * npos..(b + 1) * out_c * npos];
            gemm(out_c, patch, npos, w.data(), (patch, 1), &cols, (npos, 1), 0.0, dst);
        }
        if let Some(bv) = bias {
            let bias_vals = self.value(bv)?.data().to_vec();
            for (i, chunk) in out.data_mut().chunks_mut(npos).enumerate() {
                let bval = bias_vals[i % out_c];
                chunk.iter_mut().for_each(|v| *v += bval);
            }
        }
        let parents: Vec<Var> = [Some(input), Some(weight), bias].into_iter().flatten().collect();
        self.record(
            out,
            &parents,
            Box::new(move |ctx| {
                let x = ctx.inputs[0];
                let w = ctx.inputs[1];
                let g = ctx.grad.data();
                let mut gx = ctx.needs[0].then(|| Tensor::zeros(x.shape()));
                let mut gw = ctx.needs[1].then(|| Tensor::zeros(w.shape()));
                let mut cols = vec![0.0f32; patch * npos];
                let mut dcols = vec![0.0f32; patch * npos];
                for b in 0..batch {
                    let gout = &g[b * out_c * npos..(b + 1) * out_c * npos];
                    if let Some(gw) = gw.as_mut() {
                        geom.im2col(&x.data()[b * in_stride..(b + 1) * in_stride], &mut cols);
                        gemm(out_c, npos, patch, gout, (npos, 1), &cols, (1, npos), 1.0, gw.data_mut());
                    }
                    if let Some(gx) = gx.as_mut() {
                        gemm(patch, out_c, npos, w.data(), (1, patch), gout, (npos, 1), 0.0, &mut dcols);
                        geom.col2im(&dcols, &mut gx.data_mut()[b * in_stride..(b + 1) * in_stride]);
                    }
                }
                let mut grads = vec![gx, gw];
                if ctx.inputs.len() == 3 {
                    grads.push(ctx.needs[2].then(|| {
                        let mut gb = vec![0.0f64; out_c];
                        for (i, chunk) in g.chunks(npos).enumerate() {
                            gb[i % out_c] += chunk.iter().map(|&v| f64::from(v)).sum::<f64>();
                        }
                        Tensor::new(&[out_c], gb.into_iter().map(|v| v as f32).collect())
                            .expect("bias shape")
                    }));
                }
                grads
            }),
        )
    }

    /// Dense layer `x·Wᵀ + b` for `x: (B, in)`, `W: (out, in)`, `b: (out)`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, AutodiffError> {
        let vx = self.value(x)?;
        let vw = self.value(weight)?;
        let vb = self.value(bias)?;
        let (batch, fan_in, fan_out) = match (vx.shape(), vw.shape(), vb.shape()) {
            (&[b, i], &[o, wi], &[bo]) if i == wi && o == bo => (b, i, o),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "linear",
                    left: vx.shape().to_vec(),
                    right: vw.shape().to_vec(),
                })
            }
        };
        let mut out = Tensor::zeros(&[batch, fan_out]);
        gemm(batch, fan_in, fan_out, vx.data(), (fan_in, 1), vw.data(), (1, fan_in), 0.0, out.data_mut());
        for row in out.data_mut().chunks_mut(fan_out) {
            for (o, b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        self.record(
            out,
            &[x, weight, bias],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let gx = ctx.needs[0].then(|| {
                    let mut gx = Tensor::zeros(&[batch, fan_in]);
                    gemm(batch, fan_out, fan_in, g, (fan_out, 1), ctx.inputs[1].data(), (fan_in, 1), 0.0, gx.data_mut());
                    gx
                });
                let gw = ctx.needs[1].then(|| {
                    let mut gw = Tensor::zeros(&[fan_out, fan_in]);
                    gemm(fan_out, batch, fan_in, g, (1, fan_out), ctx.inputs[0].data(), (fan_in, 1), 0.0, gw.data_mut());
                    gw
                });
                let gb = ctx.needs[2].then(|| {
                    let mut acc = vec![0.0f64; fan_out];
                    for row in g.chunks(fan_out) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += f64::from(v);
                        }
                    }
                    Tensor::new(&[fan_out], acc.into_iter().map(|v| v as f32).collect())
                        .expect("bias shape")
                });
                vec![gx, gw, gb]
            }),
        )
    }

    /// Per-channel normalization with the current batch's statistics
    /// (biased variance), followed by the learned affine `gamma·x̂ + beta`.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var, AutodiffError> {
        let vx = self.value(x)?;
        let [batch, channels, h, w] = vx.dims4("batch_norm")?;
        let (vg, vb) = (self.value(gamma)?, self.value(beta)?);
        if vg.shape() != [channels] || vb.shape() != [channels] {
            return Err(AutodiffError::ShapeMismatch {
                op: "batch_norm",
                left: vx.shape().to_vec(),
                right: vg.shape().to_vec(),
            });
        }
        let plane = h * w;
        let count = (batch * plane) as f64;
        let mut mean = vec![0.0f64; channels];
        let mut inv_std = vec![0.0f64; channels];
        for c in 0..channels {
            let samples = (0..batch).flat_map(|b| {
                vx.data()[(b * channels + c) * plane..][..plane].iter().map(|&v| f64::from(v))
            });
            let m = samples.clone().sum::<f64>() / count;
            let var = samples.map(|v| (v - m) * (v - m)).sum::<f64>() / count;
            mean[c] = m;
            inv_std[c] = 1.0 / (var + f64::from(eps)).sqrt();
        }
        let mut out = Tensor::zeros(vx.shape());
        for b in 0..batch {
            for c in 0..channels {
                let off = (b * channels + c) * plane;
                let (g, bt) = (f64::from(vg.data()[c]), f64::from(vb.data()[c]));
                for i in off..off + plane {
                    let xhat = (f64::from(vx.data()[i]) - mean[c]) * inv_std[c];
                    out.data_mut()[i] = (g * xhat + bt) as f32;
                }
            }
        }
        self.record(
            out,
            &[x, gamma, beta],
            Box::new(move |ctx| {
                let (xv, gv) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let g = ctx.grad.data();
                let mut gx = Tensor::zeros(ctx.inputs[0].shape());
                let mut ggamma = vec![0.0f64; channels];
                let mut gbeta = vec![0.0f64; channels];
                for c in 0..channels {
                    let idx = |b: usize| (b * channels + c) * plane;
                    let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
                    for b in 0..batch {
                        for i in idx(b)..idx(b) + plane {
                            let xhat = (f64::from(xv[i]) - mean[c]) * inv_std[c];
                            let dy = f64::from(g[i]);
                            sum_dy += dy;
                            sum_dy_xhat += dy * xhat;
                        }
                    }
                    ggamma[c] = sum_dy_xhat;
                    gbeta[c] = sum_dy;
                    let gamma_c = f64::from(gv[c]);
                    for b in 0..batch {
                        for i in idx(b)..idx(b) + plane {
                            let xhat = (f64::from(xv[i]) - mean[c]) * inv_std[c];
                            let dy = f64::from(g[i]);
                            let v = gamma_c * inv_std[c] / count
                                * (count * dy - sum_dy - xhat * sum_dy_xhat);
                            gx.data_mut()[i] = v as f32;
                        }
                    }
                }
                let to_t = |v: Vec<f64>| {
                    Tensor::new(&[channels], v.into_iter().map(|x| x as f32).collect()).expect("channel shape")
                };
                vec![Some(gx), Some(to_t(ggamma)), Some(to_t(gbeta))]
            }),
        )
    }

    /// Concatenates `(B, C_i, H, W)` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let [batch, _, h, w] = self.value(*first)?.dims4("concat_channels")?;
        let mut chans = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p)?;
            let [b2, c2, h2, w2] = v.dims4("concat_channels")?;
            if (b2, h2, w2) != (batch, h, w) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_channels",
                    left: self.value(*first)?.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            chans.push(c2);
        }
        let total: usize = chans.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(batch * total * plane);
        for b in 0..batch {
            for (&p, &c) in parts.iter().zip(&chans) {
                data.extend_from_slice(&self.value(p)?.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let out = Tensor::new(&[batch, total, h, w], data)?;
        self.record(
            out,
            parts,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut offset = 0;
                chans
                    .iter()
                    .zip(&ctx.needs)
                    .map(|(&c, &need)| {
                        let start = offset;
                        offset += c;
                        need.then(|| {
                            let mut d = Vec::with_capacity(batch * c * plane);
                            for b in 0..batch {
                                d.extend_from_slice(&g[(b * total + start) * plane..][..c * plane]);
                            }
                            Tensor::new(&[batch, c, h, w], d).expect("part shape")
                        })
                    })
                    .collect()
            }),
        )
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn nearest_upsample(&mut self, x: Var, factor: usize) -> Result<Var, AutodiffError> {
        let v = self.value(x)?;
        let [batch, c, h, w] = v.dims4("nearest_upsample")?;
        if factor == 0 {
            return Err(AutodiffError::InvalidArgument("upsample factor must be positive".into()));
        }
        let (oh, ow) = (h * factor, w * factor);
        let src = v.data();
        let out = Tensor::from_fn(&[batch, c, oh, ow], |i| {
            let plane = i / (oh * ow);
            let rem = i % (oh * ow);
            let (y, xx) = (rem / ow / factor, rem % ow / factor);
            src[plane * h * w + y * w + xx]
        });
        self.record(
            out,
            &[x],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut acc = vec![0.0f64; batch * c * h * w];
                for (i, &gv) in g.iter().enumerate() {
                    let plane = i / (oh * ow);
                    let rem = i % (oh * ow);
                    let (y, xx) = (rem / ow / factor, rem % ow / factor);
                    acc[plane * h * w + y * w + xx] += f64::from(gv);
                }
                vec![Some(
                    Tensor::new(&[batch, c, h, w], acc.into_iter().map(|v| v as f32).collect())
                        .expect("input shape"),
                )]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct sliding-window sum, one output element at a time.
    fn conv_oracle(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let [b, c, h, wd] = x.dims4("oracle").unwrap();
        let [o, _, k, _] = w.dims4("oracle").unwrap();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[b, o, oh, ow]);
        for n in 0..b {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0f64;
                        for ic in 0..c {
                            for i in 0..k {
                                for j in 0..k {
                                    let sy = (y * stride + i) as isize - pad as isize;
                                    let sx = (xx * stride + j) as isize - pad as isize;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    let xv = x.data()[((n * c + ic) * h + sy as usize) * wd + sx as usize];
                                    let wv = w.data()[((oc * c + ic) * k + i) * k + j];
                                    acc += f64::from(xv) * f64::from(wv);
                                }
                            }
                        }
                        out.data_mut()[((n * o + oc) * oh + y) * ow + xx] = acc as f32;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1_conv() {
        let mut tape = Tape::new();
        let x = random(&[2, 3, 4, 5], 1);
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        let xv = tape.constant(x.clone());
        let wv = tape.constant(w);
        let bv = tape.constant(Tensor::zeros(&[3]));
        let y = tape.conv2d(xv, wv, Some(bv), 1, 0).unwrap();
        assert_eq!(tape.value(y).unwrap(), &x);
    }

    #[test]
    fn conv_matches_sliding_window() {
        for (shape, wshape, stride, pad) in [
            ([1, 1, 5, 5], [1, 1, 3, 3], 1, 0),
            ([2, 3, 7, 6], [4, 3, 3, 3], 1, 1),
            ([2, 2, 8, 9], [3, 2, 4, 4], 2, 1),
        ] {
            let x = random(&shape, 2);
            let w = random(&wshape, 3);
            let mut tape = Tape::new();
            let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
            let y = tape.conv2d(xv, wv, None, stride, pad).unwrap();
            let expected = conv_oracle(&x, &w, stride, pad);
            let got = tape.value(y).unwrap();
            assert_eq!(got.shape(), expected.shape());
            for (a, b) in got.data().iter().zip(expected.data()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_output_size() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 9, 10]));
        let w = tape.constant(Tensor::zeros(&[5, 2, 4, 4]));
        let y = tape.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(tape.value(y).unwrap().shape(), &[1, 5, 4, 5]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 5, 5]));
        let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
        let err = tape.conv2d(x, w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("[1, 2, 5, 5]") && err.contains("[1, 3, 3, 3]"));
    }

    #[test]
    fn linear_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap());
        let w = tape.constant(Tensor::new(&[2, 3], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap());
        let b = tape.constant(Tensor::new(&[2], vec![0.25, -0.25]).unwrap());
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).unwrap().data(), &[-1.75, 2.75, -1.75, -0.25]);
    }

    #[test]
    fn upsample_and_concat_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(random(&[2, 1, 3, 4], 5));
        let b = tape.constant(random(&[2, 2, 3, 4], 6));
        let cat = tape.concat_channels(&[a, b]).unwrap();
        assert_eq!(tape.value(cat).unwrap().shape(), &[2, 3, 3, 4]);
        // channel 1 of sample 1 is channel 0 of b's sample 1
        let cv = tape.value(cat).unwrap().data()[(3 + 1) * 12..(3 + 2) * 12].to_vec();
        let bv = tape.value(b).unwrap().data()[2 * 12..3 * 12].to_vec();
        assert_eq!(cv, bv);
        let up = tape.nearest_upsample(a, 2).unwrap();
        let uv = tape.value(up).unwrap();
        assert_eq!(uv.shape(), &[2, 1, 6, 8]);
        let av = tape.value(a).unwrap();
        assert_eq!(uv.data()[8 * 3 + 5], av.data()[4 + 2]);
    }

    #[test]
    fn batch_norm_normalizes() {
        let mut tape = Tape::new();
        let x = tape.constant(random(&[3, 2, 4, 4], 9));
        let g = tape.constant(Tensor::full(&[2], 1.0));
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.batch_norm(x, g, b, 1e-5).unwrap();
        let v = tape.value(y).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|n| v.data()[(n * 2 + c) * 16..][..16].iter().map(|&x| f64::from(x)))
                .collect();
            let m = vals.iter().sum::<f64>() / 48.0;
            let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 48.0;
            assert!(m.abs() < 1e-6 && (var - 1.0).abs() < 1e-3);
        }
    }
}
