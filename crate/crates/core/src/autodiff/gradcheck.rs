//! Randomized central-difference gradient checks.
//!
//! The numeric side only ever runs the forward pass, so it stays independent
//! of the backward rules it audits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Tape, Tensor, Var};

/// Denominator floor for the relative error, so gradients that are exactly
/// zero on both sides compare as equal rather than as 0/0.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct Probe {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub probes: Vec<Probe>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(f64::from(tape.value(out)?.item()))
}

/// Compares backward gradients of the scalar `f(inputs)` against central
/// differences at `probes` randomly chosen input elements.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    f: F,
    probes: usize,
    eps: f32,
    seed: u64,
) -> Result<GradReport, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let grads = vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.cloned().expect("leaf gradient")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = inputs.iter().map(Tensor::len).sum();
    let mut report = GradReport { probes: Vec::with_capacity(probes) };
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut input = 0;
        while flat >= inputs[input].len() {
            flat -= inputs[input].len();
            input += 1;
        }
        let mut shifted = inputs.to_vec();
        let orig = inputs[input].data()[flat];
        shifted[input].data_mut()[flat] = orig + eps;
        let plus = evaluate(&shifted, &f)?;
        shifted[input].data_mut()[flat] = orig - eps;
        let minus = evaluate(&shifted, &f)?;
        // actual step after f32 rounding of the perturbed inputs
        let step = f64::from(orig + eps) - f64::from(orig - eps);
        let numeric = (plus - minus) / step;
        let analytic = f64::from(grads[input].data()[flat]);
        report.probes.push(Probe {
            input,
            index: flat,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    Ok(report)
}
