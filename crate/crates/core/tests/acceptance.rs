//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! Run with: cargo test -p wgsr-core --test acceptance -- --nocapture

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use wgsr::autodiff::{Tape, Tensor};
use wgsr::imaging::{bicubic_resize, ColorSpace, ImageTensor};
use wgsr::losses::{
    adversarial_generator_loss, default_weights, discriminator_loss, total_generator_loss, AdversarialKind,
};
use wgsr::metrics::{is_lr_consistent, lr_psnr, psnr, ssim, LR_CONSISTENCY_DB};
use wgsr::models::{Discriminator, Generator};
use wgsr::trainer::{
    discriminator_seed, moving_average, pretrain_pixel, train_gan, Dataset, Domain, TrainConfig, TrainingPair,
};
use wgsr::wavelet::{make_filter, swt2_forward, swt2_inverse, SubbandLabel, WaveletError, WaveletFamily};
use wgsr::Plane;

use common::grad_cases::{autodiff_cases, loss_cases, GradCase, PROBES, TOLERANCE};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_plane(h: usize, w: usize, rng: &mut impl Rng) -> Plane {
    Plane::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
}

fn same_bits(a: &Plane, b: &Plane) -> bool {
    a.dims() == b.dims() && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn perfect_reconstruction() -> Verdict {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = common::rng(1);
    let filters: Vec<_> = WaveletFamily::ALL.iter().map(|&f| make_filter(f)).collect();
    let (mut worst, mut round_trips, mut rejected) = (0.0f64, 0, 0);
    for i in 0..50 {
        // alternate parities so both even and odd sides appear in each axis
        let mut side = |parity: usize| {
            let n: usize = rng.random_range(16..=64);
            if n % 2 == parity { n } else if n < 64 { n + 1 } else { n - 1 }
        };
        let (h, w) = (side(i % 2), side((i / 2) % 2));
        let img = random_plane(h, w, &mut rng);
        for filter in &filters {
            for levels in [1, 2] {
                match swt2_forward(&img, filter, levels) {
                    Ok(set) => {
                        let back = swt2_inverse(&set, filter).map_err(|e| e.to_string())?;
                        worst = worst.max(back.max_abs_diff(&img));
                        round_trips += 1;
                    }
                    Err(WaveletError::ImageTooSmall { .. }) if h.min(w) < filter.len() => rejected += 1,
                    Err(e) => return Err(format!("{h}x{w} {} level {levels}: {e}", filter.name())),
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= TOL && elapsed < Duration::from_secs(30),
        format!(
            "max err {worst:.1e} over {round_trips} round trips; \
             {rejected} image/filter pairs below the filter length rejected as ImageTooSmall ({elapsed:.1?})"
        ),
    )
}

fn shift_equivariance() -> Verdict {
    let mut rng = common::rng(2);
    let mut failures = Vec::new();
    for i in 0..20 {
        let family = WaveletFamily::ALL[rng.random_range(0..WaveletFamily::ALL.len())];
        let filter = make_filter(family);
        let (h, w) = (rng.random_range(38..=64), rng.random_range(38..=64));
        let (dy, dx) = (rng.random_range(0..h), rng.random_range(0..w));
        let levels = 1 + i % 2;
        let img = random_plane(h, w, &mut rng);
        let shifted = swt2_forward(&img.roll(dy, dx), &filter, levels).map_err(|e| e.to_string())?;
        let original = swt2_forward(&img, &filter, levels).map_err(|e| e.to_string())?;
        for (label, band) in original.iter() {
            if !same_bits(&band.roll(dy, dx), shifted.get(label).unwrap()) {
                failures.push(format!("{} L{levels} {} shift ({dy},{dx})", family.name(), label.as_str()));
            }
        }
    }
    ensure(
        failures.is_empty(),
        format!("20 triples, bitwise mismatches: {failures:?}"),
    )
}

/// Direct double sum `Σ_ij row[i]·col[j]·x[(y−i) mod H, (x−j) mod W]`.
fn circular_conv2(img: &Plane, height_taps: &[f64], width_taps: &[f64]) -> Plane {
    let (h, w) = img.dims();
    Plane::from_fn(h, w, |y, x| {
        let mut acc = 0.0;
        for (i, a) in height_taps.iter().enumerate() {
            for (j, b) in width_taps.iter().enumerate() {
                acc += a * b * img[((y + h * i - i) % h, (x + w * j - j) % w)];
            }
        }
        acc
    })
}

fn convolution_oracle() -> Verdict {
    const TOL: f64 = 1e-10;
    let mut rng = common::rng(3);
    // 16×16 inputs admit filters of at most 16 taps
    let filters: Vec<_> = WaveletFamily::ALL.iter().map(|&f| make_filter(f)).filter(|f| f.len() <= 16).collect();
    let mut worst = 0.0f64;
    for i in 0..10 {
        let filter = &filters[i % filters.len()];
        let img = random_plane(16, 16, &mut rng);
        let set = swt2_forward(&img, filter, 1).map_err(|e| e.to_string())?;
        let (lo, hi) = (&filter.dec_lo, &filter.dec_hi);
        for (label, height, width) in [
            (SubbandLabel::LL, lo, lo),
            (SubbandLabel::LH, hi, lo),
            (SubbandLabel::HL, lo, hi),
            (SubbandLabel::HH, hi, hi),
        ] {
            let oracle = circular_conv2(&img, height, width);
            worst = worst.max(oracle.max_abs_diff(set.get(label).unwrap()));
        }
    }
    let names: Vec<_> = filters.iter().map(|f| f.name()).collect();
    ensure(
        worst <= TOL,
        format!("level-1 subbands of 10 images vs brute-force circular convolution ({names:?}): max err {worst:.1e}"),
    )
}

fn gradient_audit() -> Verdict {
    let cases: Vec<GradCase> = autodiff_cases().into_iter().chain(loss_cases()).collect();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for (i, case) in cases.iter().enumerate() {
        let report = case.run(500 + i as u64);
        worst = worst.max(report.max_rel_err());
        if report.max_rel_err() > TOLERANCE || report.probes.len() < 20 {
            failures.push(format!("{} ({:.1e})", case.name, report.max_rel_err()));
        }
    }
    ensure(
        failures.is_empty(),
        format!(
            "finite-difference audit: {} cases x {PROBES} probes, worst rel err {worst:.1e}, failing {failures:?}",
            cases.len()
        ),
    )
}

fn loss_algebra() -> Verdict {
    let mut rng = common::rng(5);
    let close = |a: f32, b: f32| (a - b).abs() <= 4.0 * f32::EPSILON * a.abs().max(b.abs()).max(1.0);
    let mut worst = 0.0f32;
    for i in 0..100 {
        let kind = if i % 2 == 0 { AdversarialKind::Standard } else { AdversarialKind::Relativistic };
        let n = rng.random_range(1..=16);
        let a = Tensor::from_fn(&[n, 1], |_| rng.random_range(-8.0..8.0));
        let b = Tensor::from_fn(&[n, 1], |_| rng.random_range(-8.0..8.0));
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a), tape.constant(b));
        let g = adversarial_generator_loss(&mut tape, va, vb, kind).map_err(|e| e.to_string())?;
        let d = discriminator_loss(&mut tape, vb, va, kind).map_err(|e| e.to_string())?;
        let (g, d) = (tape.value(g).unwrap().item(), tape.value(d).unwrap().item());
        if !close(g, d) {
            return Err(format!("label swap differs: {g} vs {d} ({kind:?})"));
        }
        worst = worst.max((g - d).abs());
    }

    let two_log_two = 2.0 * std::f32::consts::LN_2;
    for kind in [AdversarialKind::Standard, AdversarialKind::Relativistic] {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[4, 1]));
        let g = adversarial_generator_loss(&mut tape, z, z, kind).map_err(|e| e.to_string())?;
        let d = discriminator_loss(&mut tape, z, z, kind).map_err(|e| e.to_string())?;
        for v in [g, d] {
            let v = tape.value(v).unwrap().item();
            if !close(v, two_log_two) {
                return Err(format!("{kind:?} loss at zero logits is {v}, expected 2·ln 2"));
            }
        }
    }

    let weights = default_weights(1).map_err(|e| e.to_string())?;
    let (fid, adv, perc) = (0.75f32, 1.2f32, 0.3f32);
    let mut tape = Tape::new();
    let vars = [fid, adv, perc].map(|v| tape.constant(Tensor::scalar(v)));
    let total = total_generator_loss(&mut tape, vars[0], Some(vars[1]), Some(vars[2]), &weights)
        .map_err(|e| e.to_string())?;
    let total = tape.value(total).unwrap().item();
    let by_hand = 0.75 + 0.005 * 1.2 + 1.0 * 0.3;
    ensure(
        weights.adv == 0.005 && weights.perc == 1.0 && (f64::from(total) - by_hand).abs() <= 1e-6,
        format!(
            "label swap on 100 batches (max |diff| {worst:.1e}); zero logits give 2·ln 2; \
             L_G = {total} vs hand {by_hand}"
        ),
    )
}

fn weight_tables() -> Verdict {
    use SubbandLabel::*;
    let one = default_weights(1).map_err(|e| e.to_string())?;
    let two = default_weights(2).map_err(|e| e.to_string())?;
    let want_one = vec![(LL, 0.1), (LH, 0.01), (HL, 0.01), (HH, 0.05)];
    let want_two = vec![(L2LL, 0.1), (L2LH, 0.01), (L2HL, 0.01), (L2HH, 0.05), (LH, 0.1), (HL, 0.1), (HH, 0.05)];
    ensure(
        one.subbands == want_one && two.subbands == want_two,
        format!("level-1 {:?}; level-2 {:?}", one.subbands, two.subbands),
    )
}

fn smooth_rgb(h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, ColorSpace::Rgb, |y, x, c| {
        let t = std::f64::consts::TAU;
        let (y, x) = (y as f64 / h as f64, x as f64 / w as f64);
        0.5 + 0.2 * (t * (x + 0.3 * c as f64)).sin() * (t * y).cos() + 0.1 * (t * 2.0 * (x + y)).cos()
    })
}

fn metric_oracles() -> Verdict {
    let mut rng = common::rng(7);
    let a = Plane::from_fn(32, 32, |_, _| rng.random_range(0.0..0.9));
    let b = a.map(|v| v + 0.1);
    let p = psnr(&a, &b, 1.0).map_err(|e| e.to_string())?.db;
    let s = ssim(&a, &a, 1.0).map_err(|e| e.to_string())?;
    let lr = smooth_rgb(32, 32);
    let up = bicubic_resize(&lr, 4.0).map_err(|e| e.to_string())?;
    let consistency = lr_psnr(&up, &lr).map_err(|e| e.to_string())?.db;
    let below = f64::from_bits(LR_CONSISTENCY_DB.to_bits() - 1);
    let flips = is_lr_consistent(LR_CONSISTENCY_DB) && !is_lr_consistent(below);
    ensure(
        (p - 20.0).abs() <= 1e-9 && s == 1.0 && consistency >= 45.0 && flips,
        format!(
            "PSNR(0.1 offset) = {p:.12} dB; SSIM(a,a) = {s}; bicubic lr_psnr = {consistency:.2} dB; \
             consistency flips at 45.0: {flips}"
        ),
    )
}

fn training_pair() -> TrainingPair {
    TrainingPair::from_hr("smooth", &smooth_rgb(64, 64)).expect("64x64 is a valid training image")
}

fn smoke_config(batch_norm: bool) -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.seed = 17;
    cfg.patch = 16;
    cfg.batch = 1;
    cfg.disc_batch_norm = batch_norm;
    cfg
}

struct SmokeRun {
    pretrain_losses: Vec<f32>,
    pretrain_checkpoint: Vec<u8>,
    swt: Vec<f32>,
    all_finite: bool,
    log_csv: String,
    generator: Vec<u8>,
    discriminator: Vec<u8>,
    lr_psnr_db: f64,
}

fn smoke_run(batch_norm: bool) -> SmokeRun {
    let cfg = smoke_config(batch_norm);
    let pair = training_pair();
    let lr = pair.lr.clone();
    let data = Arc::new(Dataset::new(vec![pair]).unwrap());
    let mut gen = Generator::new(cfg.generator_config(), cfg.seed).unwrap();
    let pre = pretrain_pixel(&mut gen, &data, &cfg, &mut |_, _| {}).unwrap();
    let mut disc = Discriminator::new(cfg.discriminator_config(), discriminator_seed(&cfg)).unwrap();
    let gan = train_gan(&mut gen, Some(&mut disc), &data, &cfg, &mut |_| {}).unwrap();
    let sr = gen.super_resolve(&lr).unwrap();
    SmokeRun {
        pretrain_losses: pre.losses,
        pretrain_checkpoint: pre.checkpoint.to_bytes(),
        swt: gan.log.column("L_SWT").unwrap(),
        all_finite: gan.log.rows.iter().all(|(_, r)| r.iter().all(|v| v.is_finite())),
        log_csv: gan.log.to_csv(cfg.seed, cfg.hash()),
        generator: gan.generator.to_bytes(),
        discriminator: gan.discriminator.unwrap().to_bytes(),
        lr_psnr_db: lr_psnr(&sr, &lr).unwrap().db,
    }
}

fn training_smoke() -> Verdict {
    let start = Instant::now();
    let run = smoke_run(true);
    let first = run.pretrain_losses[0];
    let halved_at = run.pretrain_losses.iter().take(500).position(|&l| l <= first / 2.0);
    let ma = moving_average(&run.swt, 100);
    let ma_last = *ma.last().unwrap();
    let a = halved_at.is_some();
    let b = run.all_finite && ma_last < f64::from(run.swt[0]);
    let c = run.lr_psnr_db >= 45.0;
    ensure(
        a && b && c,
        format!(
            "(a) pixel l1 {first:.4} halved at iteration {halved_at:?}; (b) finite {} and L_SWT 100-iter average \
             {ma_last:.3e} vs initial {:.3e}; (c) lr_psnr {:.2} dB ({:.0?})",
            run.all_finite,
            run.swt[0],
            run.lr_psnr_db,
            start.elapsed()
        ),
    )
}

fn determinism() -> Verdict {
    let first = smoke_run(false);
    let second = smoke_run(false);
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let checks = [
        ("pretrain losses", bits(&first.pretrain_losses) == bits(&second.pretrain_losses)),
        ("pretrain checkpoint", first.pretrain_checkpoint == second.pretrain_checkpoint),
        ("loss log", first.log_csv == second.log_csv),
        ("generator checkpoint", first.generator == second.generator),
        ("discriminator checkpoint", first.discriminator == second.discriminator),
    ];
    let differing: Vec<_> = checks.iter().filter(|(_, same)| !same).map(|(n, _)| *n).collect();
    ensure(
        differing.is_empty(),
        format!(
            "two batch-norm-off runs: {} checkpoint bytes and {} log bytes compared, differing: {differing:?}",
            first.generator.len() + first.discriminator.len() + first.pretrain_checkpoint.len(),
            first.log_csv.len()
        ),
    )
}

fn ablation_plumbing() -> Verdict {
    let pair = training_pair();
    let data = Arc::new(Dataset::new(vec![pair]).unwrap());
    let mut seen = Vec::new();
    for (fidelity, adv, expected) in [
        (Domain::Rgb, Domain::Rgb, ["L_RGB", "L_adv_G_rgb", "L_D_rgb"]),
        (Domain::Rgb, Domain::Swt, ["L_RGB", "L_adv_G_swt", "L_D_swt"]),
        (Domain::Swt, Domain::Rgb, ["L_SWT", "L_adv_G_rgb", "L_D_rgb"]),
        (Domain::Swt, Domain::Swt, ["L_SWT", "L_adv_G_swt", "L_D_swt"]),
    ] {
        let mut cfg = smoke_config(true);
        cfg.iterations = 50;
        cfg.fidelity_domain = fidelity;
        cfg.adv_domain = adv;
        let mut gen = Generator::new(cfg.generator_config(), cfg.seed).map_err(|e| e.to_string())?;
        let mut disc =
            Discriminator::new(cfg.discriminator_config(), discriminator_seed(&cfg)).map_err(|e| e.to_string())?;
        let report = train_gan(&mut gen, Some(&mut disc), &data, &cfg, &mut |_| {}).map_err(|e| e.to_string())?;
        let want: Vec<&str> = ["iter"].into_iter().chain(expected).chain(["L_perc", "L_G"]).collect();
        if report.log.columns != want || report.log.rows.len() != 50 {
            return Err(format!("{fidelity:?}/{adv:?}: columns {:?}, {} rows", report.log.columns, report.log.rows.len()));
        }
        seen.push(expected.join("+"));
    }
    Ok(format!("fidelity x adversarial domains, 50 iterations each: {}", seen.join(", ")))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("SWT perfect reconstruction", perfect_reconstruction),
        ("SWT shift equivariance", shift_equivariance),
        ("convolution oracle", convolution_oracle),
        ("gradient audit", gradient_audit),
        ("loss algebra", loss_algebra),
        ("subband weight tables", weight_tables),
        ("metric oracles", metric_oracles),
        ("desk-scale training smoke", training_smoke),
        ("determinism", determinism),
        ("ablation plumbing", ablation_plumbing),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (status, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
        };
        // written past the harness's capture so verdicts show in plain `cargo test`
        let mut out = std::io::stdout().lock();
        writeln!(out, "criterion {:>2} {status} {name}: {detail}", i + 1).unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
