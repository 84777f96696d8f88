use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::autodiff::L1Reduction;
use crate::losses::{default_weights, AdversarialKind, LossWeights};
use crate::models::{DiscriminatorConfig, GeneratorConfig};
use crate::wavelet::WaveletFamily;

use super::{AdamConfig, TrainerError};

/// Domain a loss term is computed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Rgb,
    Swt,
}

impl Domain {
    pub fn suffix(self) -> &'static str {
        match self {
            Domain::Rgb => "rgb",
            Domain::Swt => "swt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerceptualKind {
    Off,
    Feature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscriminatorSize {
    Tiny,
    Paper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// LR crop size; HR crops are 4× larger.
    pub patch: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_halving_step: usize,
    pub iterations: usize,
    pub pretrain_iterations: usize,
    pub pretrain_lr: f64,
    pub adam: AdamConfig,
    pub levels: usize,
    pub wavelet: WaveletFamily,
    pub weights: LossWeights,
    pub l1_norm: L1Reduction,
    pub fidelity_domain: Domain,
    pub adv_domain: Domain,
    pub perceptual: PerceptualKind,
    pub adversarial: AdversarialKind,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub gen_blocks: usize,
    pub gen_features: usize,
    pub disc: DiscriminatorSize,
    pub disc_batch_norm: bool,
    /// Batches prepared ahead of the training thread.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

const KEYS: &[&str] = &[
    "seed",
    "patch",
    "batch",
    "lr",
    "lr_halving_step",
    "iterations",
    "pretrain_iterations",
    "pretrain_lr",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "swt.levels",
    "swt.wavelet",
    "lambda.<subband>|adv|perc",
    "l1_norm",
    "fidelity_domain",
    "adv_domain",
    "perceptual",
    "adversarial_loss",
    "d_steps",
    "gen.blocks",
    "gen.features",
    "disc",
    "disc.batch_norm",
    "prefetch",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainerError> {
    value
        .parse()
        .map_err(|_| TrainerError::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    /// Desk-scale defaults: tiny networks, short schedules.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            patch: 32,
            batch: 4,
            lr: 1e-5,
            lr_halving_step: 500,
            iterations: 1000,
            pretrain_iterations: 2000,
            pretrain_lr: 2e-3,
            adam: AdamConfig::default(),
            levels: 1,
            wavelet: WaveletFamily::Sym7,
            weights: default_weights(1).expect("level 1 is supported"),
            l1_norm: L1Reduction::Mean,
            fidelity_domain: Domain::Swt,
            adv_domain: Domain::Swt,
            perceptual: PerceptualKind::Feature,
            adversarial: AdversarialKind::Standard,
            d_steps: 1,
            gen_blocks: 2,
            gen_features: 16,
            disc: DiscriminatorSize::Tiny,
            disc_batch_norm: true,
            prefetch: 4,
        }
    }

    /// Full-size networks and the published schedule.
    pub fn paper() -> Self {
        Self {
            batch: 16,
            lr: 1e-4,
            pretrain_lr: 2e-4,
            pretrain_iterations: 100_000,
            lr_halving_step: 50_000,
            iterations: 60_000,
            gen_blocks: 23,
            gen_features: 64,
            disc: DiscriminatorSize::Paper,
            ..Self::desk()
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::with_size(self.gen_blocks, self.gen_features)
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        let size = 4 * self.patch;
        let mut c = match self.disc {
            DiscriminatorSize::Tiny => DiscriminatorConfig::tiny(size),
            DiscriminatorSize::Paper => DiscriminatorConfig::paper(size),
        };
        c.batch_norm = self.disc_batch_norm;
        c
    }

    /// Whether a discriminator takes part at all.
    pub fn uses_discriminator(&self) -> bool {
        self.weights.adv > 0.0
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainerError> {
        let value = value.trim();
        let domain = |v: &str| match v {
            "rgb" => Ok(Domain::Rgb),
            "swt" => Ok(Domain::Swt),
            _ => Err(TrainerError::Config(format!("{key}: expected rgb or swt, got {v:?}"))),
        };
        match key {
            "seed" => self.seed = parse(key, value)?,
            "patch" => self.patch = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_halving_step" => self.lr_halving_step = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "pretrain_iterations" => self.pretrain_iterations = parse(key, value)?,
            "pretrain_lr" => self.pretrain_lr = parse(key, value)?,
            "adam.beta1" => self.adam.beta1 = parse(key, value)?,
            "adam.beta2" => self.adam.beta2 = parse(key, value)?,
            "adam.eps" => self.adam.eps = parse(key, value)?,
            "swt.levels" => {
                let levels: usize = parse(key, value)?;
                if levels != self.levels {
                    let fresh = default_weights(levels).map_err(|e| TrainerError::Config(e.to_string()))?;
                    self.weights.subbands = fresh.subbands;
                    self.levels = levels;
                }
            }
            "swt.wavelet" => {
                self.wavelet = value.parse().map_err(|e: crate::wavelet::WaveletError| TrainerError::Config(e.to_string()))?
            }
            "l1_norm" => {
                self.l1_norm = match value {
                    "mean" => L1Reduction::Mean,
                    "sum" => L1Reduction::Sum,
                    _ => return Err(TrainerError::Config(format!("l1_norm: expected mean or sum, got {value:?}"))),
                }
            }
            "fidelity_domain" => self.fidelity_domain = domain(value)?,
            "adv_domain" => self.adv_domain = domain(value)?,
            "perceptual" => {
                self.perceptual = match value {
                    "off" => PerceptualKind::Off,
                    "feature" => PerceptualKind::Feature,
                    _ => return Err(TrainerError::Config(format!("perceptual: expected off or feature, got {value:?}"))),
                }
            }
            "adversarial_loss" => {
                self.adversarial = match value {
                    "standard" => AdversarialKind::Standard,
                    "relativistic" => AdversarialKind::Relativistic,
                    _ => {
                        return Err(TrainerError::Config(format!(
                            "adversarial_loss: expected standard or relativistic, got {value:?}"
                        )))
                    }
                }
            }
            "d_steps" => self.d_steps = parse(key, value)?,
            "gen.blocks" => self.gen_blocks = parse(key, value)?,
            "gen.features" => self.gen_features = parse(key, value)?,
            "disc" => {
                self.disc = match value {
                    "tiny" => DiscriminatorSize::Tiny,
                    "paper" => DiscriminatorSize::Paper,
                    _ => return Err(TrainerError::Config(format!("disc: expected tiny or paper, got {value:?}"))),
                }
            }
            "disc.batch_norm" => self.disc_batch_norm = parse(key, value)?,
            "prefetch" => self.prefetch = parse(key, value)?,
            _ => match key.strip_prefix("lambda.") {
                Some(name) => self
                    .weights
                    .set(name, parse(key, value)?)
                    .map_err(|e| TrainerError::Config(e.to_string()))?,
                None => {
                    return Err(TrainerError::Config(format!(
                        "unknown key {key:?}; known keys: {}",
                        KEYS.join(", ")
                    )))
                }
            },
        }
        Ok(())
    }

    /// Applies `key=value` pairs. `swt.levels` is applied first so that
    /// per-subband weights refer to the final decomposition depth.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), TrainerError> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        let (levels, rest): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|(k, _)| *k == "swt.levels");
        for (k, v) in levels.into_iter().chain(rest) {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_text(&mut self, text: &str) -> Result<(), TrainerError> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainerError::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            pairs.push((k.trim(), v.trim()));
        }
        self.apply(pairs)
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |msg: String| Err(TrainerError::Config(msg));
        for (name, v) in [
            ("lr", self.lr),
            ("pretrain_lr", self.pretrain_lr),
            ("adam.eps", self.adam.eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, b) in [("adam.beta1", self.adam.beta1), ("adam.beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        for (name, v) in [("patch", self.patch), ("batch", self.batch), ("d_steps", self.d_steps), ("prefetch", self.prefetch)] {
            if v == 0 {
                return bad(format!("{name} must be ≥ 1"));
            }
        }
        self.weights.validate(self.levels).map_err(|e| TrainerError::Config(e.to_string()))?;
        self.generator_config().validate()?;
        if self.uses_discriminator() {
            self.discriminator_config().validate()?;
        }
        Ok(())
    }

    /// Every setting as `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("patch", self.patch.to_string());
        kv("batch", self.batch.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("lr_halving_step", self.lr_halving_step.to_string());
        kv("iterations", self.iterations.to_string());
        kv("pretrain_iterations", self.pretrain_iterations.to_string());
        kv("pretrain_lr", format!("{:?}", self.pretrain_lr));
        kv("adam.beta1", format!("{:?}", self.adam.beta1));
        kv("adam.beta2", format!("{:?}", self.adam.beta2));
        kv("adam.eps", format!("{:?}", self.adam.eps));
        kv("swt.levels", self.levels.to_string());
        kv("swt.wavelet", self.wavelet.to_string());
        for (label, w) in &self.weights.subbands {
            kv(&format!("lambda.{}", label.as_str()), format!("{w:?}"));
        }
        kv("lambda.adv", format!("{:?}", self.weights.adv));
        kv("lambda.perc", format!("{:?}", self.weights.perc));
        kv(
            "l1_norm",
            match self.l1_norm {
                L1Reduction::Mean => "mean",
                L1Reduction::Sum => "sum",
            }
            .into(),
        );
        kv("fidelity_domain", self.fidelity_domain.suffix().into());
        kv("adv_domain", self.adv_domain.suffix().into());
        kv(
            "perceptual",
            match self.perceptual {
                PerceptualKind::Off => "off",
                PerceptualKind::Feature => "feature",
            }
            .into(),
        );
        kv(
            "adversarial_loss",
            match self.adversarial {
                AdversarialKind::Standard => "standard",
                AdversarialKind::Relativistic => "relativistic",
            }
            .into(),
        );
        kv("d_steps", self.d_steps.to_string());
        kv("gen.blocks", self.gen_blocks.to_string());
        kv("gen.features", self.gen_features.to_string());
        kv(
            "disc",
            match self.disc {
                DiscriminatorSize::Tiny => "tiny",
                DiscriminatorSize::Paper => "paper",
            }
            .into(),
        );
        kv("disc.batch_norm", self.disc_batch_norm.to_string());
        kv("prefetch", self.prefetch.to_string());
        out
    }

    /// SHA-256 of the canonical text, truncated to 64 bits. The seed and the
    /// prefetch depth are left out: neither changes what a run computes for a
    /// given seed, so runs that differ only there share a hash.
    pub fn hash(&self) -> u64 {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("seed=") && !l.starts_with("prefetch="))
            .map(|l| format!("{l}\n"))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}
