//! Parameter and multiply-accumulate accounting.
//!
//! Conventions, per frame:
//!
//! * real linear `n → m`: `n·m`;
//! * frequency convolution: `out·in·k·F_out` (transposed: `in·out·k·F_in`),
//!   padding taps included;
//! * GRU: `3·(n·h + h·h)` per step, gate nonlinearities free;
//! * complex layers: 4× the underlying real layer;
//! * activations and the input magnitude: per-element constants from
//!   [`ActivationCosts`]. Cartesian conversions, folds and concatenations are free.
//!
//! [`count_macs`] is analytic; [`instrumented_macs`] runs a forward pass with
//! a counting graph and must agree with it exactly.

use std::fmt::Write as _;

use crate::arch::{Act, Domain, LayerDomain, Model, ModelSpec, Plan};
use crate::autodiff::{ActivationCosts, CVar, Graph, MacCounter};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Frames in a 10 s clip at hop 128.
pub const DEFAULT_FRAMES: usize = 1250;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub domain: LayerDomain,
    pub params: usize,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub model: String,
    pub frames: usize,
    pub rows: Vec<LayerRow>,
    pub params: usize,
    pub macs_real: u64,
    pub macs_complex: u64,
}

impl ComplexityReport {
    pub fn macs_total(&self) -> u64 {
        self.macs_real + self.macs_complex
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("model {}  frames {}\n", self.model, self.frames);
        let _ = writeln!(s, "{:<16} {:<8} {:>12} {:>16}", "layer", "domain", "params", "macs");
        for r in &self.rows {
            let _ = writeln!(s, "{:<16} {:<8} {:>12} {:>16}", r.name, r.domain.prefix(), r.params, r.macs);
        }
        let _ = writeln!(
            s,
            "total params {}  macs[R] {}  macs[C] {}  macs {}",
            self.params,
            self.macs_real,
            self.macs_complex,
            self.macs_total()
        );
        s
    }

    /// Tab-separated rows: `model layer domain params macs`, then a totals row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("model\tlayer\tdomain\tparams\tmacs\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", self.model, r.name, r.domain.prefix(), r.params, r.macs);
        }
        let _ = writeln!(s, "{}\ttotal\t-\t{}\t{}", self.model, self.params, self.macs_total());
        s
    }
}

/// Parameter counts per layer; MAC columns are zero.
pub fn count_params(plan: &Plan) -> ComplexityReport {
    let rows: Vec<LayerRow> = plan
        .layers()
        .map(|l| LayerRow {
            name: l.name.clone(),
            domain: l.domain,
            params: l.params(plan.kernel),
            macs: 0,
        })
        .collect();
    ComplexityReport {
        model: String::new(),
        frames: 0,
        params: rows.iter().map(|r| r.params).sum(),
        rows,
        macs_real: 0,
        macs_complex: 0,
    }
}

fn act_cost(act: Act, costs: &ActivationCosts) -> u64 {
    match act {
        Act::None => 0,
        Act::Relu | Act::Tanh | Act::Sigmoid => costs.real,
        Act::CRelu => costs.crelu,
        Act::CTanh => costs.ctanh,
    }
}

/// Analytic parameter and MAC counts for `frames` frames.
pub fn count_macs(spec: &ModelSpec, frames: usize, costs: &ActivationCosts) -> Result<ComplexityReport> {
    if frames == 0 {
        return Err(Error::Spec("frames must be at least 1".into()));
    }
    let plan = Plan::new(spec)?;
    let t = frames as u64;
    let mut rows = Vec::new();
    if spec.domain == Domain::Hybrid {
        rows.push(LayerRow {
            name: "real.input_mag".into(),
            domain: LayerDomain::Real,
            params: 0,
            macs: costs.magnitude * spec.freq_bins as u64 * t,
        });
    }
    for l in plan.layers() {
        let per_frame = l.macs_per_frame(plan.kernel) + act_cost(l.act, costs) * l.act_elements_per_frame() as u64;
        rows.push(LayerRow {
            name: l.name.clone(),
            domain: l.domain,
            params: l.params(plan.kernel),
            macs: per_frame * t,
        });
    }
    let sum_in = |d: LayerDomain| rows.iter().filter(|r| r.domain == d).map(|r| r.macs).sum();
    Ok(ComplexityReport {
        model: spec.name.clone(),
        frames,
        params: rows.iter().map(|r| r.params).sum(),
        macs_real: sum_in(LayerDomain::Real),
        macs_complex: sum_in(LayerDomain::Complex),
        rows,
    })
}

/// Counts MACs by running a forward pass over `frames` frames of a fixed
/// input through a counting graph. Returns the counter.
pub fn instrumented_macs(model: &Model, frames: usize, costs: &ActivationCosts) -> Result<MacCounter> {
    if frames == 0 {
        return Err(Error::Spec("frames must be at least 1".into()));
    }
    let shape = Shape::new(1, 1, model.freq_bins(), frames);
    let mut g = Graph::with_mac_counter(*costs);
    let p = model.params.bind(&mut g, false);
    let re = g.constant(Tensor::from_fn(shape, |i| 0.1 + 0.01 * (i[2] as f64 + 0.3 * i[3] as f64).sin()));
    let im = g.constant(Tensor::from_fn(shape, |i| 0.05 * (0.7 * i[2] as f64).cos()));
    model.forward(&mut g, &p, CVar::new(re, im))?;
    Ok(g.macs().expect("counting graph").clone())
}

/// Brute-force count of stored scalars.
pub fn stored_scalars(model: &Model) -> usize {
    model.params.iter().map(|(_, _, t)| t.numel()).sum()
}

/// Side-by-side comparison in the column order
/// `params, macs[R], macs[C], macs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub reports: Vec<ComplexityReport>,
    /// Index of the report with the lowest MAC total (first on ties).
    pub lowest: usize,
}

pub fn compare(reports: Vec<ComplexityReport>) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::Spec(format!(
            "comparison needs at least two models, got {}",
            reports.len()
        )));
    }
    let lowest = reports
        .iter()
        .enumerate()
        .min_by_key(|(_, r)| r.macs_total())
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok(Comparison { reports, lowest })
}

fn giga(m: u64) -> String {
    format!("{:.3}G", m as f64 / 1e9)
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<10} {:>10} {:>10} {:>10} {:>10}\n",
            "model", "params", "macs[R]", "macs[C]", "macs"
        );
        for (i, r) in self.reports.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<10} {:>9.1}k {:>10} {:>10} {:>10}{}",
                r.model,
                r.params as f64 / 1e3,
                giga(r.macs_real),
                giga(r.macs_complex),
                giga(r.macs_total()),
                if i == self.lowest { "  *lowest" } else { "" }
            );
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("model\tparams\tmacs_real\tmacs_complex\tmacs\tlowest\n");
        for (i, r) in self.reports.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.model,
                r.params,
                r.macs_real,
                r.macs_complex,
                r.macs_total(),
                i == self.lowest
            );
        }
        s
    }
}

/// Score of one candidate kernel size in [`calibrate_kernel`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelScore {
    pub kernel: usize,
    /// `Σ |params / target − 1|`; infinite if some spec has no valid geometry.
    pub deviation: f64,
    pub params: Vec<Option<usize>>,
}

/// Re-targets `spec` to kernel `k` at its stride. CRN specs keep their
/// linear size, so the first padding reproducing it is used; other specs
/// use the centred pad `(k − s)/2` when it gives a valid geometry.
pub fn with_kernel(spec: &ModelSpec, k: usize) -> Option<ModelSpec> {
    let s = spec.stride_f;
    let centred = (k >= s).then(|| (k - s) / 2);
    let has_linear = spec.branches().iter().any(|(_, b)| b.linear.is_some());
    let pads: Vec<usize> = if has_linear {
        (0..k).collect()
    } else {
        centred.into_iter().chain(0..k).collect()
    };
    pads.into_iter().find_map(|p| {
        let cand = ModelSpec {
            kernel_f: k,
            pad_f: p,
            ..spec.clone()
        };
        Plan::new(&cand).ok().map(|_| cand)
    })
}

/// Scores each kernel size by the summed relative deviation of total
/// parameters from `targets`. Sorted best first.
pub fn calibrate_kernel(
    specs: &[(ModelSpec, f64)],
    kernels: impl IntoIterator<Item = usize>,
) -> Vec<KernelScore> {
    let mut scores: Vec<KernelScore> = kernels
        .into_iter()
        .map(|k| {
            let params: Vec<Option<usize>> = specs
                .iter()
                .map(|(s, _)| with_kernel(s, k).and_then(|c| Plan::new(&c).ok()).map(|p| p.total_params()))
                .collect();
            let deviation = params
                .iter()
                .zip(specs)
                .map(|(p, (_, t))| p.map_or(f64::INFINITY, |p| (p as f64 / t - 1.0).abs()))
                .sum();
            KernelScore {
                kernel: k,
                deviation,
                params,
            }
        })
        .collect();
    scores.sort_by(|a, b| a.deviation.total_cmp(&b.deviation));
    scores
}
