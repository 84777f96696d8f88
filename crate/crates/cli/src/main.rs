use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use wgsr::autodiff::Checkpoint;
use wgsr::imaging::{extract_y, load_png, save_png, save_png16_gray, ColorSpace};
use wgsr::metrics::{eval_csv, psnr, psnr_image, ssim, EvalRecord};
use wgsr::models::{Discriminator, Generator, GeneratorConfig};
use wgsr::trainer::{
    discriminator_seed, pretrain_pixel, train_gan, Dataset, DiscriminatorSize, TrainConfig,
    TrainerError,
};
use wgsr::wavelet::{make_filter_by_name, swt2_forward};
use wgsr::Plane;

#[derive(Parser)]
#[command(
    name = "wgsr",
    version,
    about = "Wavelet-domain GAN super-resolution (×4)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pixel-loss pretraining of the generator.
    Pretrain(TrainArgs),
    /// Adversarial training; pretrains first unless `--init` is given.
    Train {
        #[command(flatten)]
        args: TrainArgs,
        /// Generator checkpoint to start from.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Super-resolves a dataset and writes per-image metrics.
    Evaluate {
        /// Generator checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory with `HR/*.png` and optionally `LR/*.png`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
        /// Border pixels cropped before PSNR/SSIM.
        #[arg(long, default_value_t = 0)]
        shave: usize,
        /// Also write the SR images here.
        #[arg(long)]
        save_sr: Option<PathBuf>,
    },
    /// Stationary wavelet decomposition of an image's luma.
    Decompose {
        input: PathBuf,
        #[arg(long, default_value = "sym7")]
        wavelet: String,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        /// Write each subband as a normalized 16-bit PNG.
        #[arg(long)]
        dump_subbands: Option<PathBuf>,
    },
    /// PSNR and SSIM between two images.
    Psnr {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0)]
        shave: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with `HR/*.png` and optionally `LR/*.png`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Flat `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Start from paper-scale settings instead of desk-scale ones.
    #[arg(long)]
    paper: bool,
    /// Force the small generator and discriminator.
    #[arg(long)]
    tiny: bool,
    /// Print progress every N iterations (0 = quiet).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = if self.paper {
            TrainConfig::paper()
        } else {
            TrainConfig::desk()
        };
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.parse_text(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        let pairs = self
            .overrides
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .with_context(|| format!("--set {s:?}: expected key=value"))
            })
            .collect::<Result<Vec<_>>>()?;
        cfg.apply(pairs)?;
        if self.tiny {
            let g = GeneratorConfig::tiny();
            cfg.gen_blocks = g.num_blocks;
            cfg.gen_features = g.features;
            cfg.disc = DiscriminatorSize::Tiny;
        }
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn prepare(&self) -> Result<(TrainConfig, Arc<Dataset>)> {
        let cfg = self.config()?;
        let data = Dataset::from_dir(&self.data)
            .with_context(|| format!("loading {}", self.data.display()))?;
        eprintln!(
            "{} training pairs, config hash {:016x}",
            data.pairs().len(),
            cfg.hash()
        );
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        write(&self.out.join("config.txt"), &cfg.to_text())?;
        Ok((cfg, Arc::new(data)))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Saves the last good parameters before surfacing a divergence.
fn rescue(err: TrainerError, out: &Path, name: &str) -> anyhow::Error {
    if let TrainerError::Diverged { last_good, .. } = &err {
        let path = out.join(name);
        if last_good.save(&path).is_ok() {
            eprintln!("last good parameters saved to {}", path.display());
        }
    }
    err.into()
}

fn pretrain(
    gen: &mut Generator,
    data: &Arc<Dataset>,
    cfg: &TrainConfig,
    args: &TrainArgs,
) -> Result<Checkpoint> {
    let every = args.log_every;
    let mut progress = |iter: usize, loss: f32| {
        if every > 0 && iter.is_multiple_of(every) {
            eprintln!(
                "pretrain {iter}/{} L_pixel {loss:.5}",
                cfg.pretrain_iterations
            );
        }
    };
    let report = pretrain_pixel(gen, data, cfg, &mut progress)
        .map_err(|e| rescue(e, &args.out, "pretrain_last_good.ckpt"))?;
    let mut csv = format!(
        "# seed={} config_hash={:016x}\niter,L_pixel\n",
        cfg.seed,
        cfg.hash()
    );
    for (i, loss) in report.losses.iter().enumerate() {
        csv.push_str(&format!("{},{loss:?}\n", i + 1));
    }
    write(&args.out.join("pretrain_log.csv"), &csv)?;
    let path = args.out.join("pretrain.ckpt");
    report.checkpoint.save(&path)?;
    eprintln!("wrote {}", path.display());
    Ok(report.checkpoint)
}

fn run_pretrain(args: &TrainArgs) -> Result<()> {
    let (cfg, data) = args.prepare()?;
    let mut gen = Generator::new(cfg.generator_config(), cfg.seed)?;
    pretrain(&mut gen, &data, &cfg, args)?;
    Ok(())
}

fn run_train(args: &TrainArgs, init: Option<&Path>) -> Result<()> {
    let (cfg, data) = args.prepare()?;
    let mut gen = Generator::new(cfg.generator_config(), cfg.seed)?;
    match init {
        Some(path) => {
            let ckpt =
                Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            gen.load_checkpoint(&ckpt)
                .with_context(|| format!("applying {}", path.display()))?;
        }
        None => {
            pretrain(&mut gen, &data, &cfg, args)?;
        }
    }
    let mut disc = if cfg.uses_discriminator() {
        Some(Discriminator::new(
            cfg.discriminator_config(),
            discriminator_seed(&cfg),
        )?)
    } else {
        None
    };
    let every = args.log_every;
    let mut progress = |log: &wgsr::trainer::TrainLog| {
        if let Some((iter, values)) = log.rows.last() {
            if every > 0 && iter % every == 0 {
                let fields: Vec<String> = log.columns[1..]
                    .iter()
                    .zip(values)
                    .map(|(c, v)| format!("{c} {v:.5}"))
                    .collect();
                eprintln!("train {iter}/{} {}", cfg.iterations, fields.join(" "));
            }
        }
    };
    let report = train_gan(&mut gen, disc.as_mut(), &data, &cfg, &mut progress)
        .map_err(|e| rescue(e, &args.out, "last_good.ckpt"))?;
    write(
        &args.out.join("train_log.csv"),
        &report.log.to_csv(cfg.seed, cfg.hash()),
    )?;
    report.generator.save(args.out.join("generator.ckpt"))?;
    if let Some(d) = &report.discriminator {
        d.save(args.out.join("discriminator.ckpt"))?;
    }
    eprintln!(
        "wrote checkpoints and train_log.csv to {}",
        args.out.display()
    );
    Ok(())
}

fn run_evaluate(
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    shave: usize,
    save_sr: Option<&Path>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let config = Generator::config_from_checkpoint(&ckpt)
        .context("checkpoint does not describe a generator")?;
    let mut gen = Generator::new(config, 0)?;
    gen.load_checkpoint(&ckpt)?;
    let data = Dataset::from_dir(data).with_context(|| format!("loading {}", data.display()))?;
    if let Some(dir) = save_sr {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut pairs: Vec<_> = data.pairs().iter().collect();
    pairs.sort_by(|a, b| a.name.cmp(&b.name));
    let records = pairs
        .par_iter()
        .map(|pair| {
            let sr = gen.super_resolve(&pair.lr)?;
            if let Some(dir) = save_sr {
                save_png(&sr, dir.join(&pair.name))?;
            }
            EvalRecord::evaluate(pair.name.clone(), &sr, &pair.hr, &pair.lr, shave)
                .with_context(|| format!("scoring {}", pair.name))
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = eval_csv(&records);
    write(out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn luma(path: &Path) -> Result<Plane> {
    let img = load_png(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match img.colorspace() {
        ColorSpace::Y => img.channel(0),
        _ => extract_y(&img)?.channel(0),
    })
}

fn run_decompose(input: &Path, wavelet: &str, levels: usize, dump: Option<&Path>) -> Result<()> {
    let filter = make_filter_by_name(wavelet)?;
    let set = swt2_forward(&luma(input)?, &filter, levels)?;
    let mut sidecar = String::from("subband,min,max\n");
    println!("subband,min,max,mean_abs,energy");
    for (label, band) in set.iter() {
        let (lo, hi) = band.min_max();
        let n = band.as_slice().len() as f64;
        let mean_abs = band.as_slice().iter().map(|v| v.abs()).sum::<f64>() / n;
        println!(
            "{},{lo:.6},{hi:.6},{mean_abs:.6},{:.6}",
            label.as_str(),
            band.sum_squares()
        );
        sidecar.push_str(&format!("{},{lo:?},{hi:?}\n", label.as_str()));
    }
    if let Some(dir) = dump {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (label, band) in set.iter() {
            let (lo, hi) = band.min_max();
            save_png16_gray(band, lo, hi, dir.join(format!("{}.png", label.as_str())))?;
        }
        write(&dir.join("normalization.txt"), &sidecar)?;
    }
    Ok(())
}

fn run_psnr(a: &Path, b: &Path, shave: usize) -> Result<()> {
    let (ia, ib) = (load_png(a)?, load_png(b)?);
    if ia.colorspace() == ColorSpace::Rgb && ib.colorspace() == ColorSpace::Rgb {
        println!("psnr_rgb {:.4}", psnr_image(&ia, &ib, 1.0)?.db);
    }
    let (ya, yb) = (luma(a)?, luma(b)?);
    let (ya, yb) = if shave == 0 {
        (ya, yb)
    } else {
        let (h, w) = ya.dims();
        if h <= 2 * shave || w <= 2 * shave {
            bail!("--shave {shave} leaves nothing of a {h}×{w} image");
        }
        let crop = |p: &Plane| p.crop(shave, shave, h - 2 * shave, w - 2 * shave);
        (crop(&ya), crop(&yb))
    };
    println!("psnr_y {:.4}", psnr(&ya, &yb, 1.0)?.db);
    println!("ssim_y {:.6}", ssim(&ya, &yb, 1.0)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain(args) => run_pretrain(&args),
        Command::Train { args, init } => run_train(&args, init.as_deref()),
        Command::Evaluate {
            checkpoint,
            data,
            out,
            shave,
            save_sr,
        } => run_evaluate(&checkpoint, &data, &out, shave, save_sr.as_deref()),
        Command::Decompose {
            input,
            wavelet,
            levels,
            dump_subbands,
        } => run_decompose(&input, &wavelet, levels, dump_subbands.as_deref()),
        Command::Psnr { a, b, shave } => run_psnr(&a, &b, shave),
    }
}
