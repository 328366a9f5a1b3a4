//! Layer geometry derived from a [`ModelSpec`].
//!
//! Encoder convolutions map `F → floor((F + 2p − k)/s) + 1`. Decoder layer
//! `j` mirrors encoder layer `L−1−j` and restores its input extent, using an
//! output padding in `[0, s)`. CRN branches flatten the bottleneck
//! `(C, F')` to `C·F'` features for the GRU stack; the linear layer maps
//! back to `C·F'`.

use super::spec::{Domain, Family, ModelSpec};
use crate::autodiff::ConvGeom;
use crate::error::{Error, Result};
use crate::layers::{ConvF, Gru, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerDomain {
    Real,
    Complex,
}

impl LayerDomain {
    /// Real-equivalent parameter multiplier.
    pub fn param_factor(self) -> usize {
        match self {
            LayerDomain::Real => 1,
            LayerDomain::Complex => 2,
        }
    }

    /// MAC multiplier of a lifted layer.
    pub fn mac_factor(self) -> u64 {
        match self {
            LayerDomain::Real => 1,
            LayerDomain::Complex => 4,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            LayerDomain::Real => "real",
            LayerDomain::Complex => "complex",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    ConvT,
    Gru,
    Linear,
}

/// Activation following a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    None,
    Relu,
    Tanh,
    Sigmoid,
    CRelu,
    CTanh,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    pub name: String,
    pub kind: LayerKind,
    pub domain: LayerDomain,
    /// Channels for convolutions, features for GRU/linear.
    pub in_size: usize,
    pub out_size: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub out_pad: usize,
    pub act: Act,
}

impl LayerPlan {
    /// Parameters of one underlying real layer.
    pub fn real_params(&self, kernel: usize) -> usize {
        match self.kind {
            LayerKind::Conv | LayerKind::ConvT => ConvF::param_count(self.in_size, self.out_size, kernel),
            LayerKind::Gru => Gru::param_count(self.in_size, self.out_size),
            LayerKind::Linear => Linear::param_count(self.in_size, self.out_size),
        }
    }

    pub fn params(&self, kernel: usize) -> usize {
        self.domain.param_factor() * self.real_params(kernel)
    }

    /// Layer MACs per frame, excluding the activation.
    pub fn macs_per_frame(&self, kernel: usize) -> u64 {
        let (i, o) = (self.in_size as u64, self.out_size as u64);
        let real = match self.kind {
            LayerKind::Conv => o * i * kernel as u64 * self.f_out as u64,
            LayerKind::ConvT => i * o * kernel as u64 * self.f_in as u64,
            LayerKind::Gru => 3 * (i * o + o * o),
            LayerKind::Linear => i * o,
        };
        self.domain.mac_factor() * real
    }

    /// Elements passed through the following activation per frame.
    pub fn act_elements_per_frame(&self) -> usize {
        match self.act {
            Act::None => 0,
            _ => self.out_size * self.f_out,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchPlan {
    pub domain: LayerDomain,
    pub input_freq: usize,
    pub encoder: Vec<LayerPlan>,
    /// GRU layers followed by the linear layer (CRN only).
    pub recurrent: Vec<LayerPlan>,
    /// `(channels, frequency)` at the encoder output.
    pub bottleneck: (usize, usize),
    pub decoder: Vec<LayerPlan>,
}

impl BranchPlan {
    pub fn layers(&self) -> impl Iterator<Item = &LayerPlan> {
        self.encoder.iter().chain(&self.recurrent).chain(&self.decoder)
    }

    pub fn encoder_params(&self, kernel: usize) -> usize {
        self.encoder.iter().chain(&self.recurrent).map(|l| l.params(kernel)).sum()
    }

    pub fn decoder_params(&self, kernel: usize) -> usize {
        self.decoder.iter().map(|l| l.params(kernel)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub kernel: usize,
    pub geom: ConvGeom,
    pub domain: Domain,
    pub real: Option<BranchPlan>,
    pub complex: Option<BranchPlan>,
}

impl Plan {
    pub fn new(spec: &ModelSpec) -> Result<Plan> {
        spec.validate()?;
        let geom = ConvGeom {
            kernel: spec.kernel_f,
            stride: spec.stride_f,
            pad: spec.pad_f,
        };
        let bins = spec.freq_bins;
        let hybrid = spec.domain == Domain::Hybrid;
        let real_in = if spec.domain == Domain::Real { 2 * bins } else { bins };
        // Encoders first: the decoders' input depends on both bottlenecks.
        let mut real = spec
            .real
            .as_ref()
            .map(|b| encode_plan(spec, LayerDomain::Real, b, real_in, geom))
            .transpose()?;
        let mut complex = spec
            .complex
            .as_ref()
            .map(|b| encode_plan(spec, LayerDomain::Complex, b, bins, geom))
            .transpose()?;
        if hybrid {
            let (r, c) = (real.as_ref().expect("hybrid"), complex.as_ref().expect("hybrid"));
            if r.bottleneck.1 != c.bottleneck.1 {
                return Err(Error::Geometry(format!(
                    "{}: real bottleneck has {} bins but complex has {}",
                    spec.name, r.bottleneck.1, c.bottleneck.1
                )));
            }
        }
        let (rc, cc) = (
            real.as_ref().map_or(0, |b| b.bottleneck.0),
            complex.as_ref().map_or(0, |b| b.bottleneck.0),
        );
        if let (Some(p), Some(b)) = (real.as_mut(), spec.real.as_ref()) {
            let dec_in = if hybrid { rc + 2 * cc } else { rc };
            let last = if hybrid { Act::Sigmoid } else { Act::None };
            decode_plan(spec, p, &b.decoder, dec_in, geom, last)?;
        }
        if let (Some(p), Some(b)) = (complex.as_mut(), spec.complex.as_ref()) {
            let dec_in = if hybrid { cc + rc / 2 } else { cc };
            decode_plan(spec, p, &b.decoder, dec_in, geom, Act::None)?;
        }
        Ok(Plan {
            kernel: spec.kernel_f,
            geom,
            domain: spec.domain,
            real,
            complex,
        })
    }

    pub fn branches(&self) -> impl Iterator<Item = &BranchPlan> {
        self.real.iter().chain(self.complex.iter())
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerPlan> {
        self.branches().flat_map(BranchPlan::layers)
    }

    pub fn total_params(&self) -> usize {
        self.layers().map(|l| l.params(self.kernel)).sum()
    }
}

fn encode_plan(
    spec: &ModelSpec,
    domain: LayerDomain,
    b: &super::spec::BranchSpec,
    input_freq: usize,
    geom: ConvGeom,
) -> Result<BranchPlan> {
    let p = domain.prefix();
    let (act, last_act) = match domain {
        LayerDomain::Real => (Act::Relu, Act::Tanh),
        LayerDomain::Complex => (Act::CRelu, Act::CTanh),
    };
    let mut encoder = Vec::new();
    let (mut ch, mut f) = (1, input_freq);
    for (i, &w) in b.encoder.iter().enumerate() {
        let f_out = geom.conv_out(f).ok_or_else(|| {
            Error::Geometry(format!(
                "{}: {p} encoder layer {i} receives {f} bins, fewer than kernel {} after padding",
                spec.name, geom.kernel
            ))
        })?;
        encoder.push(LayerPlan {
            name: format!("{p}.enc{i}"),
            kind: LayerKind::Conv,
            domain,
            in_size: ch,
            out_size: w,
            f_in: f,
            f_out,
            out_pad: 0,
            act: if i + 1 == b.encoder.len() { last_act } else { act },
        });
        ch = w;
        f = f_out;
    }
    let mut recurrent = Vec::new();
    if spec.family == Family::Crn {
        let flat = ch * f;
        let lin = b.linear.expect("validated");
        if lin != flat {
            return Err(Error::Geometry(format!(
                "{}: {p} linear size {lin} does not restore the bottleneck {ch} channels x {f} bins = {flat}",
                spec.name
            )));
        }
        let mut n = flat;
        for (i, &h) in b.gru.iter().enumerate() {
            recurrent.push(LayerPlan {
                name: format!("{p}.gru{i}"),
                kind: LayerKind::Gru,
                domain,
                in_size: n,
                out_size: h,
                f_in: 1,
                f_out: 1,
                out_pad: 0,
                act: Act::None,
            });
            n = h;
        }
        recurrent.push(LayerPlan {
            name: format!("{p}.linear"),
            kind: LayerKind::Linear,
            domain,
            in_size: n,
            out_size: lin,
            f_in: 1,
            f_out: 1,
            out_pad: 0,
            act: Act::None,
        });
    }
    Ok(BranchPlan {
        domain,
        input_freq,
        encoder,
        recurrent,
        bottleneck: (ch, f),
        decoder: Vec::new(),
    })
}

fn decode_plan(
    spec: &ModelSpec,
    plan: &mut BranchPlan,
    widths: &[usize],
    dec_in: usize,
    geom: ConvGeom,
    last_act: Act,
) -> Result<()> {
    let p = plan.domain.prefix();
    let act = match plan.domain {
        LayerDomain::Real => Act::Relu,
        LayerDomain::Complex => Act::CRelu,
    };
    let n = plan.encoder.len();
    let mut ch = dec_in;
    for (j, &w) in widths.iter().enumerate() {
        let mirror = &plan.encoder[n - 1 - j];
        let (f_in, target) = (mirror.f_out, mirror.f_in);
        let base = geom.convt_out(f_in, 0).unwrap_or(0);
        if target < base || target - base >= geom.stride {
            return Err(Error::Geometry(format!(
                "{}: {p} decoder layer {j} cannot map {f_in} bins back to {target} with kernel {}, stride {}, pad {}",
                spec.name, geom.kernel, geom.stride, geom.pad
            )));
        }
        plan.decoder.push(LayerPlan {
            name: format!("{p}.dec{j}"),
            kind: LayerKind::ConvT,
            domain: plan.domain,
            in_size: ch,
            out_size: w,
            f_in,
            f_out: target,
            out_pad: target - base,
            act: if j + 1 == widths.len() { last_act } else { act },
        });
        ch = w;
    }
    Ok(())
}

/// Real-equivalent encoder parameters of a branch with the given widths,
/// without building a full plan. `None` when the geometry is invalid.
pub fn encoder_params(
    domain: LayerDomain,
    family: Family,
    input_freq: usize,
    geom: ConvGeom,
    encoder: &[usize],
    gru: &[usize],
) -> Option<usize> {
    let mut total = 0;
    let (mut ch, mut f) = (1, input_freq);
    for &w in encoder {
        f = geom.conv_out(f)?;
        total += ConvF::param_count(ch, w, geom.kernel);
        ch = w;
    }
    if family == Family::Crn {
        let flat = ch * f;
        let mut n = flat;
        for &h in gru {
            total += Gru::param_count(n, h);
            n = h;
        }
        total += Linear::param_count(n, flat);
    }
    Some(domain.param_factor() * total)
}

/// Real-equivalent decoder parameters for a decoder fed `dec_in` channels.
pub fn decoder_params(domain: LayerDomain, kernel: usize, dec_in: usize, decoder: &[usize]) -> usize {
    let mut ch = dec_in;
    let mut total = 0;
    for &w in decoder {
        total += ConvF::param_count(ch, w, kernel);
        ch = w;
    }
    domain.param_factor() * total
}

/// Frequency extent at the encoder output.
pub fn bottleneck_freq(input_freq: usize, geom: ConvGeom, layers: usize) -> Option<usize> {
    (0..layers).try_fold(input_freq, |f, _| geom.conv_out(f))
}
