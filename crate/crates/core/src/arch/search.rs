//! Deriving complex and hybrid counterparts of a real model.
//!
//! Given a real model with encoder budget `N_f` and decoder budget `N_g`
//! (real parameters; GRU and linear layers count as encoder):
//!
//! * the hybrid model gets a real branch with `N_f/2` and `N_g/2`
//!   parameters and a complex branch with `N_f/4` and `N_g/4` complex
//!   parameters (`N_f/2`, `N_g/2` real-equivalent);
//! * the complex model keeps `N_f` and `N_g` real-equivalent parameters,
//!   i.e. half as many complex parameters.
//!
//! Widths are fitted per encoder/decoder: all hidden widths are scaled by a
//! common factor and rounded to even integers, then individual layers are
//! nudged (largest first) by ±2, then ±1, then in pairs, until the count is
//! within tolerance of the target. Encoders are fitted first because each
//! decoder's input width depends on both bottlenecks.

use super::plan::{bottleneck_freq, decoder_params, encoder_params, LayerDomain, Plan};
use super::spec::{BranchSpec, Budget, Domain, Family, ModelSpec};
use crate::autodiff::ConvGeom;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 0.02;

/// Starting widths for a search. Seeds already within tolerance are kept.
#[derive(Clone, Debug, Default)]
pub struct Seeds {
    pub real: Option<BranchSpec>,
    pub complex: Option<BranchSpec>,
}

impl Seeds {
    pub fn from_spec(spec: &ModelSpec) -> Seeds {
        Seeds {
            real: spec.real.clone(),
            complex: spec.complex.clone(),
        }
    }
}

/// Budget summary of a real model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RealBudget {
    pub encoder: usize,
    pub decoder: usize,
}

pub fn real_budget(spec: &ModelSpec) -> Result<RealBudget> {
    if spec.domain != Domain::Real {
        return Err(Error::Spec(format!(
            "{}: expected a real-domain spec, got {}",
            spec.name, spec.domain
        )));
    }
    let plan = Plan::new(spec)?;
    let b = plan.real.as_ref().expect("real");
    Ok(RealBudget {
        encoder: b.encoder_params(plan.kernel),
        decoder: b.decoder_params(plan.kernel),
    })
}

struct Fit {
    widths: Vec<usize>,
    count: usize,
}

fn within(count: usize, target: f64, tol: f64) -> bool {
    (count as f64 - target).abs() <= tol * target + 1e-9
}

fn round_even(x: f64) -> usize {
    ((x / 2.0).round() as usize * 2).max(2)
}

/// Fits `widths` so that `count(widths)` is within `tol` of `target`.
/// Positions flagged in `even` stay even.
fn fit_widths(
    start: &[usize],
    even: &[bool],
    target: f64,
    tol: f64,
    count: &dyn Fn(&[usize]) -> Option<usize>,
) -> std::result::Result<Fit, Fit> {
    let eval = |w: &[usize]| count(w).map(|c| (c, (c as f64 - target).abs()));
    if let Some((c, _)) = eval(start) {
        if within(c, target, tol) {
            return Ok(Fit {
                widths: start.to_vec(),
                count: c,
            });
        }
    }
    let scaled = |alpha: f64| -> Vec<usize> { start.iter().map(|&w| round_even(w as f64 * alpha)).collect() };
    let f = |alpha: f64| eval(&scaled(alpha)).map_or(usize::MAX, |(c, _)| c);
    let (mut lo, mut hi) = (1e-3, 1.0);
    while f(hi) < target as usize && hi < 1e4 {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) as f64) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut best = [scaled(lo), scaled(hi)]
        .into_iter()
        .filter_map(|w| eval(&w).map(|(c, e)| (w, c, e)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(w, c, e)| (w, c, e))
        .unwrap_or_else(|| (start.to_vec(), usize::MAX, f64::INFINITY));

    let mut order: Vec<usize> = (0..start.len()).collect();
    let try_move = |best: &mut (Vec<usize>, usize, f64), deltas: &[(usize, i64)]| -> bool {
        let mut w = best.0.clone();
        for &(i, d) in deltas {
            let v = w[i] as i64 + d;
            let min = if even[i] { 2 } else { 1 };
            if v < min || (even[i] && v % 2 != 0) {
                return false;
            }
            w[i] = v as usize;
        }
        match eval(&w) {
            Some((c, e)) if e < best.2 => {
                *best = (w, c, e);
                true
            }
            _ => false,
        }
    };
    for step in [2i64, 1] {
        loop {
            if within(best.1, target, tol) {
                break;
            }
            order.sort_by_key(|&i| std::cmp::Reverse(best.0[i]));
            let mut moved = false;
            for &i in &order {
                if step == 1 && even[i] {
                    continue;
                }
                moved |= try_move(&mut best, &[(i, step)]) || try_move(&mut best, &[(i, -step)]);
            }
            if !moved {
                break;
            }
        }
    }
    let deltas = [-2i64, -1, 1, 2];
    loop {
        if within(best.1, target, tol) {
            break;
        }
        let mut moved = false;
        for i in 0..start.len() {
            for j in i + 1..start.len() {
                for &a in &deltas {
                    for &b in &deltas {
                        moved |= try_move(&mut best, &[(i, a), (j, b)]);
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }
    let fit = Fit {
        widths: best.0,
        count: best.1,
    };
    if within(fit.count, target, tol) {
        Ok(fit)
    } else {
        Err(fit)
    }
}

fn budget_error(spec: &ModelSpec, part: &str, target: f64, fit: Fit) -> Error {
    Error::Budget(format!(
        "{}: {part} target {target:.1} unreachable, closest widths {:?} give {} ({:+.2}%)",
        spec.name,
        fit.widths,
        fit.count,
        100.0 * (fit.count as f64 / target - 1.0)
    ))
}

/// Output of an encoder fit: conv widths, GRU sizes, linear size.
struct EncoderFit {
    encoder: Vec<usize>,
    gru: Vec<usize>,
    linear: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn fit_encoder(
    spec: &ModelSpec,
    part: &str,
    domain: LayerDomain,
    input_freq: usize,
    geom: ConvGeom,
    start: &BranchSpec,
    target: f64,
    tol: f64,
    last_even: bool,
) -> Result<EncoderFit> {
    let ne = start.encoder.len();
    let mut widths = start.encoder.clone();
    widths.extend(&start.gru);
    let mut even = vec![false; widths.len()];
    if last_even {
        even[ne - 1] = true;
    }
    let family = spec.family;
    let count = |w: &[usize]| encoder_params(domain, family, input_freq, geom, &w[..ne], &w[ne..]);
    let fit = fit_widths(&widths, &even, target, tol, &count).map_err(|f| budget_error(spec, part, target, f))?;
    let f_out = bottleneck_freq(input_freq, geom, ne).expect("fitted geometry is valid");
    let encoder = fit.widths[..ne].to_vec();
    let linear = (family == Family::Crn).then(|| encoder[ne - 1] * f_out);
    Ok(EncoderFit {
        gru: fit.widths[ne..].to_vec(),
        encoder,
        linear,
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_decoder(
    spec: &ModelSpec,
    part: &str,
    domain: LayerDomain,
    kernel: usize,
    dec_in: usize,
    start: &[usize],
    target: f64,
    tol: f64,
) -> Result<Vec<usize>> {
    let hidden = &start[..start.len() - 1];
    if hidden.is_empty() {
        let c = decoder_params(domain, kernel, dec_in, &[1]);
        if within(c, target, tol) {
            return Ok(vec![1]);
        }
        return Err(budget_error(spec, part, target, Fit { widths: vec![1], count: c }));
    }
    let even = vec![false; hidden.len()];
    let count = |w: &[usize]| {
        let mut full = w.to_vec();
        full.push(1);
        Some(decoder_params(domain, kernel, dec_in, &full))
    };
    let fit = fit_widths(hidden, &even, target, tol, &count).map_err(|f| budget_error(spec, part, target, f))?;
    let mut out = fit.widths;
    out.push(1);
    Ok(out)
}

fn check_tol(spec: &ModelSpec, tol: f64, budget: RealBudget, divisor: usize) -> Result<()> {
    if !(0.0..1.0).contains(&tol) {
        return Err(Error::Spec(format!("tolerance {tol} outside [0, 1)")));
    }
    if tol == 0.0 && (budget.encoder % divisor != 0 || budget.decoder % divisor != 0) {
        return Err(Error::Budget(format!(
            "{}: zero tolerance needs budgets divisible by {divisor}, got N_f = {}, N_g = {}",
            spec.name, budget.encoder, budget.decoder
        )));
    }
    Ok(())
}

/// Padding for a branch consuming `bins` (rather than `2·bins`) inputs:
/// the centred pad `(k − s)/2` when integral, else the real model's pad.
fn counterpart_pad(spec: &ModelSpec) -> usize {
    let (k, s) = (spec.kernel_f, spec.stride_f);
    if k >= s && (k - s) % 2 == 0 {
        (k - s) / 2
    } else {
        spec.pad_f
    }
}

fn renamed(name: &str, prefix: char) -> String {
    match name.strip_prefix('r') {
        Some(rest) if !rest.is_empty() => format!("{prefix}{rest}"),
        _ => format!("{prefix}-{name}"),
    }
}

/// Hybrid counterpart of a real model.
pub fn hybridize(real: &ModelSpec, tol: f64, seeds: &Seeds) -> Result<ModelSpec> {
    let budget = real_budget(real)?;
    check_tol(real, tol, budget, 2)?;
    let rb = real.real.as_ref().expect("real");
    let pad = counterpart_pad(real);
    let geom = ConvGeom {
        kernel: real.kernel_f,
        stride: real.stride_f,
        pad,
    };
    let bins = real.freq_bins;
    let (nf, ng) = (budget.encoder as f64, budget.decoder as f64);
    let real_seed = seeds.real.as_ref().unwrap_or(rb);
    let complex_seed = seeds.complex.as_ref().unwrap_or(rb);

    let re = fit_encoder(real, "real encoder", LayerDomain::Real, bins, geom, real_seed, nf / 2.0, tol, true)?;
    let ce = fit_encoder(real, "complex encoder", LayerDomain::Complex, bins, geom, complex_seed, nf / 2.0, tol, false)?;
    let (cr, cc) = (*re.encoder.last().expect("non-empty"), *ce.encoder.last().expect("non-empty"));
    let rd = fit_decoder(real, "real decoder", LayerDomain::Real, geom.kernel, cr + 2 * cc, &real_seed.decoder, ng / 2.0, tol)?;
    let cd = fit_decoder(real, "complex decoder", LayerDomain::Complex, geom.kernel, cc + cr / 2, &complex_seed.decoder, ng / 2.0, tol)?;

    let spec = ModelSpec {
        name: renamed(&real.name, 'h'),
        domain: Domain::Hybrid,
        pad_f: pad,
        conversions: Domain::Hybrid.conversions(),
        budget: Some(Budget {
            encoder: budget.encoder,
            decoder: budget.decoder,
        }),
        real: Some(BranchSpec {
            encoder: re.encoder,
            gru: re.gru,
            linear: re.linear,
            decoder: rd,
        }),
        complex: Some(BranchSpec {
            encoder: ce.encoder,
            gru: ce.gru,
            linear: ce.linear,
            decoder: cd,
        }),
        ..real.clone()
    };
    Plan::new(&spec)?;
    Ok(spec)
}

/// Complex counterpart of a real model with the same real-equivalent
/// encoder and decoder budgets.
pub fn derive_complex(real: &ModelSpec, tol: f64, seeds: &Seeds) -> Result<ModelSpec> {
    let budget = real_budget(real)?;
    check_tol(real, tol, budget, 1)?;
    let rb = real.real.as_ref().expect("real");
    let pad = counterpart_pad(real);
    let geom = ConvGeom {
        kernel: real.kernel_f,
        stride: real.stride_f,
        pad,
    };
    let seed = seeds.complex.as_ref().unwrap_or(rb);
    let (nf, ng) = (budget.encoder as f64, budget.decoder as f64);
    let ce = fit_encoder(real, "complex encoder", LayerDomain::Complex, real.freq_bins, geom, seed, nf, tol, false)?;
    let cc = *ce.encoder.last().expect("non-empty");
    let cd = fit_decoder(real, "complex decoder", LayerDomain::Complex, geom.kernel, cc, &seed.decoder, ng, tol)?;
    let spec = ModelSpec {
        name: renamed(&real.name, 'c'),
        domain: Domain::Complex,
        pad_f: pad,
        conversions: Domain::Complex.conversions(),
        budget: Some(Budget {
            encoder: budget.encoder,
            decoder: budget.decoder,
        }),
        real: None,
        complex: Some(BranchSpec {
            encoder: ce.encoder,
            gru: ce.gru,
            linear: ce.linear,
            decoder: cd,
        }),
        ..real.clone()
    };
    Plan::new(&spec)?;
    Ok(spec)
}

/// Relative deviation of each hybrid part from its target, in the order
/// (real encoder, real decoder, complex encoder, complex decoder).
pub fn hybrid_budget_errors(hybrid: &ModelSpec, budget: Budget) -> Result<[f64; 4]> {
    let plan = Plan::new(hybrid)?;
    let (r, c) = match (&plan.real, &plan.complex) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(Error::Spec(format!("{} is not a hybrid spec", hybrid.name))),
    };
    let k = plan.kernel;
    let (hf, hg) = (budget.encoder as f64 / 2.0, budget.decoder as f64 / 2.0);
    let rel = |v: usize, t: f64| v as f64 / t - 1.0;
    Ok([
        rel(r.encoder_params(k), hf),
        rel(r.decoder_params(k), hg),
        rel(c.encoder_params(k), hf),
        rel(c.decoder_params(k), hg),
    ])
}
