use crate::autodiff::{BoundParams, Checkpoint, ParamSet, Tape, Var};

use super::{init_rng, stack_images, unstack_images, Conv, ConvSpec, ModelError};
use crate::imaging::{ColorSpace, ImageTensor};

/// Residual branches are added back scaled by this factor.
const RESIDUAL_SCALE: f32 = 0.2;
/// He-init scale for every dense-block conv.
const DENSE_INIT_GAIN: f32 = 0.1;
/// He-init scale elsewhere; matches the variance of a uniform
/// `±1/sqrt(fan_in)` init.
const OUTER_INIT_GAIN: f32 = 0.408_248_3;
/// Convolutions per dense block.
const DENSE_CONVS: usize = 5;
/// Dense blocks per residual-in-residual block.
const DENSE_BLOCKS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub num_blocks: usize,
    pub features: usize,
    /// Channels added by each dense-block convolution.
    pub growth: usize,
    pub scale: usize,
    pub slope: f32,
}

impl GeneratorConfig {
    /// Desk-scale default: 2 blocks of 16 features.
    pub fn tiny() -> Self {
        Self::with_size(2, 16)
    }

    /// 23 blocks of 64 features.
    pub fn paper() -> Self {
        Self::with_size(23, 64)
    }

    pub fn with_size(num_blocks: usize, features: usize) -> Self {
        Self {
            num_blocks,
            features,
            growth: features / 2,
            scale: 4,
            slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.num_blocks == 0 {
            return bad("generator needs at least one block".into());
        }
        if self.features < 4 {
            return bad(format!("generator features must be ≥ 4, got {}", self.features));
        }
        if self.growth == 0 {
            return bad("generator growth must be ≥ 1".into());
        }
        if self.scale != 4 {
            return bad(format!("only ×4 upscaling is supported, got ×{}", self.scale));
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return bad(format!("leaky slope must be finite and ≥ 0, got {}", self.slope));
        }
        Ok(())
    }
}

struct DenseBlock {
    convs: Vec<Conv>,
}

/// RRDB-style ×4 generator: shallow feature conv, residual-in-residual dense
/// blocks, trunk conv with a global skip, then two nearest ×2 + conv stages.
pub struct Generator {
    config: GeneratorConfig,
    params: ParamSet,
    first: Conv,
    blocks: Vec<[DenseBlock; DENSE_BLOCKS]>,
    trunk: Conv,
    up: [Conv; 2],
    hr: Conv,
    last: Conv,
}

impl Generator {
    /// Scaled He-normal initialization; dense-block convs start small so
    /// residual branches are close to identity.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = init_rng(seed);
        let mut params = ParamSet::new();
        let nf = config.features;
        let gc = config.growth;
        let mut conv = |params: &mut ParamSet, name: &str, inputs, outputs, gain| {
            let spec = ConvSpec { inputs, outputs, kernel: 3, stride: 1, bias: true, gain };
            Conv::new(params, name, spec, &mut rng)
        };

        let first = conv(&mut params, "g.first", 3, nf, OUTER_INIT_GAIN);
        let mut blocks = Vec::with_capacity(config.num_blocks);
        for b in 0..config.num_blocks {
            let rdbs = std::array::from_fn(|r| {
                let convs = (0..DENSE_CONVS)
                    .map(|i| {
                        let name = format!("g.rrdb{b}.rdb{r}.conv{i}");
                        let last = i == DENSE_CONVS - 1;
                        let out = if last { nf } else { gc };
                        conv(&mut params, &name, nf + i * gc, out, DENSE_INIT_GAIN)
                    })
                    .collect();
                DenseBlock { convs }
            });
            blocks.push(rdbs);
        }
        let trunk = conv(&mut params, "g.trunk", nf, nf, OUTER_INIT_GAIN);
        let up = [
            conv(&mut params, "g.up0", nf, nf, OUTER_INIT_GAIN),
            conv(&mut params, "g.up1", nf, nf, OUTER_INIT_GAIN),
        ];
        let hr = conv(&mut params, "g.hr", nf, nf, OUTER_INIT_GAIN);
        let last = conv(&mut params, "g.last", nf, 3, OUTER_INIT_GAIN);
        Ok(Self { config, params, first, blocks, trunk, up, hr, last })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn dense_block(&self, tape: &mut Tape, p: &BoundParams, block: &DenseBlock, x: Var) -> Result<Var, ModelError> {
        let mut features = vec![x];
        for (i, conv) in block.convs.iter().enumerate() {
            let input = if features.len() == 1 { x } else { tape.concat_channels(&features)? };
            let y = conv.apply(tape, p, input)?;
            if i + 1 < block.convs.len() {
                features.push(tape.leaky_relu(y, self.config.slope)?);
            } else {
                let scaled = tape.scale(y, RESIDUAL_SCALE)?;
                return Ok(tape.add(scaled, x)?);
            }
        }
        unreachable!("dense blocks have at least one conv")
    }

    /// `(B, 3, H, W)` → `(B, 3, 4H, 4W)`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var, ModelError> {
        let channels = tape.value(x)?.dims4("generator")?[1];
        if channels != 3 {
            return Err(ModelError::InputChannels { model: "generator", expected: 3, found: channels });
        }
        let slope = self.config.slope;
        let fea = self.first.apply(tape, p, x)?;
        let mut h = fea;
        for rdbs in &self.blocks {
            let block_in = h;
            for rdb in rdbs {
                h = self.dense_block(tape, p, rdb, h)?;
            }
            let scaled = tape.scale(h, RESIDUAL_SCALE)?;
            h = tape.add(scaled, block_in)?;
        }
        let trunk = self.trunk.apply(tape, p, h)?;
        let mut h = tape.add(fea, trunk)?;
        for conv in &self.up {
            let u = tape.nearest_upsample(h, 2)?;
            let c = conv.apply(tape, p, u)?;
            h = tape.leaky_relu(c, slope)?;
        }
        let c = self.hr.apply(tape, p, h)?;
        let h = tape.leaky_relu(c, slope)?;
        Ok(self.last.apply(tape, p, h)?)
    }

    /// Upscales one RGB image with frozen parameters; output clamped to [0, 1].
    pub fn super_resolve(&self, lr: &ImageTensor) -> Result<ImageTensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(stack_images(std::slice::from_ref(lr))?);
        let y = self.forward(&mut tape, &p, x)?;
        let sr = unstack_images(tape.value(y)?, ColorSpace::Rgb)?.remove(0);
        Ok(sr.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Parameters plus the architecture sizes needed to rebuild the network.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tensors: self.params.named_tensors(),
            meta: vec![
                ("gen.num_blocks".into(), self.config.num_blocks as u64),
                ("gen.features".into(), self.config.features as u64),
                ("gen.growth".into(), self.config.growth as u64),
            ],
        }
    }

    /// Loads parameters into this (already built) generator.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), ModelError> {
        let c = &self.config;
        for (key, want) in [
            ("gen.num_blocks", c.num_blocks),
            ("gen.features", c.features),
            ("gen.growth", c.growth),
        ] {
            if let Some(found) = ckpt.meta(key) {
                if found != want as u64 {
                    return Err(ModelError::ArchitectureMismatch(format!("{key}={found}, model has {want}")));
                }
            }
        }
        Ok(self.params.load_named(&ckpt.tensors)?)
    }

    /// Architecture recorded in a checkpoint written by [`Self::to_checkpoint`].
    pub fn config_from_checkpoint(ckpt: &Checkpoint) -> Option<GeneratorConfig> {
        let blocks = ckpt.meta("gen.num_blocks")? as usize;
        let features = ckpt.meta("gen.features")? as usize;
        let mut config = GeneratorConfig::with_size(blocks, features);
        config.growth = ckpt.meta("gen.growth")? as usize;
        Some(config)
    }
}
