use crate::autodiff::{BoundParams, Checkpoint, ParamId, ParamSet, Tape, Tensor, Var};

use super::{he_normal, init_rng, Conv, ConvSpec, ModelError};

const BN_EPS: f32 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    /// Output channels of each conv; kernels alternate 3×3 stride 1 and
    /// 4×4 stride 2, starting with 3×3.
    pub widths: Vec<usize>,
    pub in_channels: usize,
    /// Spatial size of the (square) input; fixes the first linear layer.
    pub input_size: usize,
    pub hidden: usize,
    pub batch_norm: bool,
    pub slope: f32,
}

impl DiscriminatorConfig {
    /// Nine convs, 64 → 512 features.
    pub fn paper(input_size: usize) -> Self {
        Self::with_widths(vec![64, 64, 128, 128, 256, 256, 512, 512, 512], input_size)
    }

    /// Five convs, 8 → 64 features.
    pub fn tiny(input_size: usize) -> Self {
        Self::with_widths(vec![8, 16, 32, 64, 64], input_size)
    }

    pub fn with_widths(widths: Vec<usize>, input_size: usize) -> Self {
        Self {
            widths,
            in_channels: 3,
            input_size,
            hidden: 100,
            batch_norm: true,
            slope: 0.2,
        }
    }

    fn kernel_stride(layer: usize) -> (usize, usize) {
        if layer.is_multiple_of(2) {
            (3, 1)
        } else {
            (4, 2)
        }
    }

    /// Spatial size after the conv stack.
    pub fn feature_size(&self) -> usize {
        (0..self.widths.len()).fold(self.input_size, |s, i| {
            let (k, stride) = Self::kernel_stride(i);
            (s + 2 - k) / stride + 1
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad(format!("discriminator widths must be non-empty and positive, got {:?}", self.widths));
        }
        if self.in_channels != 3 {
            return bad(format!("discriminator input has 3 channels, got {}", self.in_channels));
        }
        if self.hidden == 0 {
            return bad("discriminator hidden width must be ≥ 1".into());
        }
        let strides = self.widths.len() / 2;
        if self.input_size >> strides == 0 || !self.input_size.is_multiple_of(1 << strides) {
            return bad(format!(
                "input size {} must be a positive multiple of {}",
                self.input_size,
                1 << strides
            ));
        }
        Ok(())
    }
}

struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

/// Strided conv classifier producing one logit per sample.
pub struct Discriminator {
    config: DiscriminatorConfig,
    params: ParamSet,
    convs: Vec<(Conv, Option<Norm>)>,
    fc: [(ParamId, ParamId); 2],
}

impl Discriminator {
    /// Batch norm follows every conv but the first; convs carry a bias only
    /// where no batch norm follows (or batch norm is disabled).
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = init_rng(seed);
        let mut params = ParamSet::new();
        let mut convs = Vec::with_capacity(config.widths.len());
        let mut inputs = config.in_channels;
        for (i, &outputs) in config.widths.iter().enumerate() {
            let (kernel, stride) = DiscriminatorConfig::kernel_stride(i);
            let norm = config.batch_norm && i > 0;
            let spec = ConvSpec { inputs, outputs, kernel, stride, bias: !norm, gain: 1.0 };
            let conv = Conv::new(&mut params, &format!("d.conv{i}"), spec, &mut rng);
            let norm = norm.then(|| Norm {
                gamma: params.push(format!("d.bn{i}.gamma"), Tensor::full(&[outputs], 1.0)),
                beta: params.push(format!("d.bn{i}.beta"), Tensor::zeros(&[outputs])),
            });
            convs.push((conv, norm));
            inputs = outputs;
        }
        let s = config.feature_size();
        let flat = inputs * s * s;
        let mut linear = |name: &str, inputs: usize, outputs: usize, params: &mut ParamSet| {
            let w = params.push(format!("{name}.weight"), he_normal(&[outputs, inputs], inputs, 1.0, &mut rng));
            let b = params.push(format!("{name}.bias"), Tensor::zeros(&[outputs]));
            (w, b)
        };
        let fc = [
            linear("d.fc0", flat, config.hidden, &mut params),
            linear("d.fc1", config.hidden, 1, &mut params),
        ];
        Ok(Self { config, params, convs, fc })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// `(B, 3, S, S)` → `(B, 1)` logits.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var, ModelError> {
        let [batch, channels, h, w] = tape.value(x)?.dims4("discriminator")?;
        if channels != self.config.in_channels {
            return Err(ModelError::InputChannels {
                model: "discriminator",
                expected: self.config.in_channels,
                found: channels,
            });
        }
        if (h, w) != (self.config.input_size, self.config.input_size) {
            return Err(ModelError::InputSize { expected: self.config.input_size, found: (h, w) });
        }
        let mut h = x;
        for (conv, norm) in &self.convs {
            h = conv.apply(tape, p, h)?;
            if let Some(n) = norm {
                h = tape.batch_norm(h, p.var(n.gamma), p.var(n.beta), BN_EPS)?;
            }
            h = tape.relu(h)?;
        }
        let flat = tape.value(h)?.len() / batch;
        let h = tape.reshape(h, &[batch, flat])?;
        let (w0, b0) = self.fc[0];
        let h = tape.linear(h, p.var(w0), p.var(b0))?;
        let h = tape.leaky_relu(h, self.config.slope)?;
        let (w1, b1) = self.fc[1];
        Ok(tape.linear(h, p.var(w1), p.var(b1))?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tensors: self.params.named_tensors(),
            meta: vec![
                ("disc.layers".into(), self.config.widths.len() as u64),
                ("disc.input_size".into(), self.config.input_size as u64),
                ("disc.batch_norm".into(), u64::from(self.config.batch_norm)),
            ],
        }
    }

    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), ModelError> {
        Ok(self.params.load_named(&ckpt.tensors)?)
    }
}
