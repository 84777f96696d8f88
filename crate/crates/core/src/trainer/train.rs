use std::fmt::Write as _;
use std::sync::Arc;

use crate::autodiff::{Checkpoint, L1Reduction, Tape, Var};
use crate::losses::{
    adversarial_generator_loss, discriminator_loss, perceptual_loss, swt_fidelity_loss, total_generator_loss,
    LossError, RandomConvFeatures,
};
use crate::models::{detail_concat_diff, Discriminator, Generator};
use crate::wavelet::make_filter;

use super::{
    adam_step, learning_rate, AdamState, BatchSampler, BatchStream, Dataset, Domain, PerceptualKind, TrainConfig,
    TrainerError,
};

// Independent streams derived from the run seed.
const PRETRAIN_DATA_STREAM: u64 = 1;
const GAN_DATA_STREAM: u64 = 2;
const DISCRIMINATOR_INIT_STREAM: u64 = 3;
const PERCEPTUAL_INIT_STREAM: u64 = 4;

fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seed for [`Discriminator::new`] in a run with `cfg`.
pub fn discriminator_seed(cfg: &TrainConfig) -> u64 {
    stream_seed(cfg.seed, DISCRIMINATOR_INIT_STREAM)
}

/// Per-iteration loss values; `columns[0]` is always `iter`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f32>)>,
}

impl TrainLog {
    fn with_columns(names: &[String]) -> Self {
        let mut columns = vec!["iter".to_string()];
        columns.extend(names.iter().cloned());
        Self { columns, rows: Vec::new() }
    }

    /// Values of one named loss column.
    pub fn column(&self, name: &str) -> Option<Vec<f32>> {
        let i = self.columns.iter().position(|c| c == name)?.checked_sub(1)?;
        Some(self.rows.iter().map(|(_, v)| v[i]).collect())
    }

    /// CSV with a leading `# seed=… config_hash=…` comment line. Values use
    /// the shortest representation that round-trips the f32.
    pub fn to_csv(&self, seed: u64, config_hash: u64) -> String {
        let mut out = format!("# seed={seed} config_hash={config_hash:016x}\n{}\n", self.columns.join(","));
        for (iter, values) in &self.rows {
            write!(out, "{iter}").unwrap();
            for v in values {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(values: &[f32], w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += f64::from(v);
        if i >= w {
            sum -= f64::from(values[i - w]);
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

fn stamp(mut ckpt: Checkpoint, cfg: &TrainConfig, iterations: usize) -> Checkpoint {
    ckpt.meta.push(("seed".into(), cfg.seed));
    ckpt.meta.push(("config_hash".into(), cfg.hash()));
    ckpt.meta.push(("iterations".into(), iterations as u64));
    ckpt
}

fn diverged(gen: &Generator, cfg: &TrainConfig, iteration: usize, message: String) -> TrainerError {
    TrainerError::Diverged {
        iteration,
        message,
        last_good: Box::new(stamp(gen.to_checkpoint(), cfg, iteration - 1)),
    }
}

fn check_loss(gen: &Generator, cfg: &TrainConfig, iteration: usize, result: Result<Var, LossError>) -> Result<Var, TrainerError> {
    match result {
        Err(LossError::NonFinite { term, value }) => Err(diverged(gen, cfg, iteration, format!("{term} = {value}"))),
        other => Ok(other?),
    }
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    /// Pixel l1 of each iteration's batch, before that iteration's update.
    pub losses: Vec<f32>,
    pub checkpoint: Checkpoint,
}

/// Minimizes the RGB l1 between `G(lr)` and `hr` for
/// `cfg.pretrain_iterations` steps, starting from `cfg.pretrain_lr` and
/// halving every `cfg.lr_halving_step` iterations.
pub fn pretrain_pixel(
    gen: &mut Generator,
    data: &Arc<Dataset>,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(usize, f32),
) -> Result<PretrainReport, TrainerError> {
    cfg.validate()?;
    let sampler = BatchSampler::new(data.clone(), cfg.patch, cfg.batch, stream_seed(cfg.seed, PRETRAIN_DATA_STREAM))?;
    let mut stream = BatchStream::spawn(sampler, cfg.pretrain_iterations, cfg.prefetch);
    let mut adam = AdamState::new(gen.params());
    let mut losses = Vec::with_capacity(cfg.pretrain_iterations);
    for iteration in 1..=cfg.pretrain_iterations {
        let batch = stream.next_batch()?;
        let mut tape = Tape::new();
        let p = gen.params().bind(&mut tape, true);
        let x = tape.constant(batch.lr);
        let y = tape.constant(batch.hr);
        let sr = gen.forward(&mut tape, &p, x)?;
        let loss = tape.l1(sr, y, L1Reduction::Mean)?;
        let value = tape.value(loss)?.item();
        if !value.is_finite() {
            return Err(diverged(gen, cfg, iteration, format!("pixel loss = {value}")));
        }
        tape.backward(loss)?;
        let grads = gen.params().grads(&tape, &p)?;
        let lr = learning_rate(iteration - 1, cfg.pretrain_lr, cfg.lr_halving_step);
        adam_step(gen.params_mut(), &grads, &mut adam, &cfg.adam, lr)?;
        losses.push(value);
        progress(iteration, value);
    }
    Ok(PretrainReport { losses, checkpoint: stamp(gen.to_checkpoint(), cfg, cfg.pretrain_iterations) })
}

/// What the discriminator sees for the real and the generated batch.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorInputs {
    pub real: Var,
    pub fake: Var,
}

/// `[LH, HL, HH]` of the luma SWT in the subband domain, the RGB images
/// themselves in the RGB domain.
pub fn discriminator_inputs(
    tape: &mut Tape,
    sr_rgb: Var,
    hr_rgb: Var,
    cfg: &TrainConfig,
) -> Result<DiscriminatorInputs, TrainerError> {
    match cfg.adv_domain {
        Domain::Rgb => Ok(DiscriminatorInputs { real: hr_rgb, fake: sr_rgb }),
        Domain::Swt => {
            let filter = make_filter(cfg.wavelet);
            let mut details = |rgb: Var| -> Result<Var, TrainerError> {
                let y = tape.rgb_to_y(rgb)?;
                let bands = tape.swt_forward(y, &filter, cfg.levels)?;
                Ok(detail_concat_diff(tape, &bands)?)
            };
            let real = details(hr_rgb)?;
            let fake = details(sr_rgb)?;
            Ok(DiscriminatorInputs { real, fake })
        }
    }
}

/// One discriminator update on detached copies of `inputs`. Clears any
/// previous gradients on `tape` first and leaves this step's gradients in
/// place. Returns the discriminator loss before the update.
pub fn discriminator_step(
    tape: &mut Tape,
    disc: &mut Discriminator,
    adam: &mut AdamState,
    inputs: DiscriminatorInputs,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f32, TrainerError> {
    let real = tape.detach(inputs.real)?;
    let fake = tape.detach(inputs.fake)?;
    tape.reset();
    let p = disc.params().bind(tape, true);
    let real_logits = disc.forward(tape, &p, real)?;
    let fake_logits = disc.forward(tape, &p, fake)?;
    let loss = discriminator_loss(tape, real_logits, fake_logits, cfg.adversarial)?;
    let value = tape.value(loss)?.item();
    if !value.is_finite() {
        return Err(LossError::NonFinite { term: "discriminator loss", value }.into());
    }
    tape.backward(loss)?;
    let grads = disc.params().grads(tape, &p)?;
    adam_step(disc.params_mut(), &grads, adam, &cfg.adam, lr)?;
    Ok(value)
}

#[derive(Clone, Debug)]
pub struct GanReport {
    pub log: TrainLog,
    pub generator: Checkpoint,
    pub discriminator: Option<Checkpoint>,
}

/// Log column names for a run with `cfg`.
pub fn log_columns(cfg: &TrainConfig, with_discriminator: bool) -> Vec<String> {
    let mut names = vec![match cfg.fidelity_domain {
        Domain::Swt => "L_SWT".to_string(),
        Domain::Rgb => "L_RGB".to_string(),
    }];
    if with_discriminator {
        let s = cfg.adv_domain.suffix();
        names.push(format!("L_adv_G_{s}"));
        names.push(format!("L_D_{s}"));
    }
    if cfg.perceptual == PerceptualKind::Feature {
        names.push("L_perc".into());
    }
    names.push("L_G".into());
    names
}

/// Alternating discriminator / generator updates for `cfg.iterations`
/// steps. Without a discriminator the adversarial terms are skipped, which
/// requires `lambda.adv = 0`.
pub fn train_gan(
    gen: &mut Generator,
    mut disc: Option<&mut Discriminator>,
    data: &Arc<Dataset>,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&TrainLog),
) -> Result<GanReport, TrainerError> {
    cfg.validate()?;
    if disc.is_none() && cfg.uses_discriminator() {
        return Err(TrainerError::Config("lambda.adv > 0 needs a discriminator".into()));
    }
    if let Some(d) = disc.as_deref() {
        let want = cfg.discriminator_config();
        if d.config().input_size != want.input_size {
            return Err(TrainerError::Config(format!(
                "discriminator expects {}px inputs, HR patches are {}px",
                d.config().input_size,
                want.input_size
            )));
        }
    }
    let filter = make_filter(cfg.wavelet);
    let extractor = (cfg.perceptual == PerceptualKind::Feature)
        .then(|| RandomConvFeatures::new(stream_seed(cfg.seed, PERCEPTUAL_INIT_STREAM)));
    let sampler = BatchSampler::new(data.clone(), cfg.patch, cfg.batch, stream_seed(cfg.seed, GAN_DATA_STREAM))?;
    let mut stream = BatchStream::spawn(sampler, cfg.iterations, cfg.prefetch);
    let mut g_adam = AdamState::new(gen.params());
    let mut d_adam = disc.as_deref().map(|d| AdamState::new(d.params()));
    let mut log = TrainLog::with_columns(&log_columns(cfg, disc.is_some()));

    for iteration in 1..=cfg.iterations {
        let lr = learning_rate(iteration - 1, cfg.lr, cfg.lr_halving_step);
        let batch = stream.next_batch()?;
        let mut tape = Tape::new();
        let gp = gen.params().bind(&mut tape, true);
        let x = tape.constant(batch.lr);
        let hr = tape.constant(batch.hr);
        let sr = gen.forward(&mut tape, &gp, x)?;

        let mut d_values = None;
        if let (Some(d), Some(adam)) = (disc.as_deref_mut(), d_adam.as_mut()) {
            let inputs = discriminator_inputs(&mut tape, sr, hr, cfg)?;
            let mut l_d = 0.0;
            for _ in 0..cfg.d_steps {
                l_d = discriminator_step(&mut tape, d, adam, inputs, cfg, lr)
                    .map_err(|e| match e {
                        TrainerError::Loss(LossError::NonFinite { term, value }) => {
                            diverged(gen, cfg, iteration, format!("{term} = {value}"))
                        }
                        other => other,
                    })?;
            }
            tape.reset();
            let dp = d.params().bind(&mut tape, false);
            let real_logits = d.forward(&mut tape, &dp, inputs.real)?;
            let fake_logits = d.forward(&mut tape, &dp, inputs.fake)?;
            let adv = adversarial_generator_loss(&mut tape, real_logits, fake_logits, cfg.adversarial)?;
            d_values = Some((adv, l_d));
        }

        let fidelity = match cfg.fidelity_domain {
            Domain::Swt => {
                let sr_y = tape.rgb_to_y(sr)?;
                let hr_y = tape.rgb_to_y(hr)?;
                swt_fidelity_loss(&mut tape, sr_y, hr_y, &filter, cfg.levels, &cfg.weights, cfg.l1_norm)?
            }
            Domain::Rgb => tape.l1(sr, hr, cfg.l1_norm)?,
        };
        let perc = match &extractor {
            Some(e) => Some(perceptual_loss(&mut tape, sr, hr, e)?),
            None => None,
        };
        let total = total_generator_loss(&mut tape, fidelity, d_values.map(|(a, _)| a), perc, &cfg.weights);
        let total = check_loss(gen, cfg, iteration, total)?;

        let mut row = vec![tape.value(fidelity)?.item()];
        if let Some((adv, l_d)) = d_values {
            row.push(tape.value(adv)?.item());
            row.push(l_d);
        }
        if let Some(p) = perc {
            row.push(tape.value(p)?.item());
        }
        row.push(tape.value(total)?.item());

        tape.backward(total)?;
        let grads = gen.params().grads(&tape, &gp)?;
        adam_step(gen.params_mut(), &grads, &mut g_adam, &cfg.adam, lr)?;
        log.rows.push((iteration, row));
        progress(&log);
    }
    Ok(GanReport {
        log,
        generator: stamp(gen.to_checkpoint(), cfg, cfg.iterations),
        discriminator: disc.map(|d| stamp(d.to_checkpoint(), cfg, cfg.iterations)),
    })
}
