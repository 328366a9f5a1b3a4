//! Model construction and the forward pass.
//!
//! Models process one clip at a time: inputs are `(1, 1, bins, T)`.
//!
//! * Real models consume `[re, im]` of the input concatenated along
//!   frequency and emit a mask whose two frequency halves are its real and
//!   imaginary parts.
//! * Complex models consume and emit complex tensors directly.
//! * Hybrid models run a real branch on `|Y|` and a complex branch on `Y`,
//!   exchange bottleneck features both ways and emit a sigmoid magnitude
//!   mask plus a complex correction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{Act, BranchPlan, LayerDomain, LayerKind, LayerPlan, Plan};
use super::spec::{Domain, ModelSpec};
use crate::autodiff::{Branch, CVar, Graph, Var};
use crate::convert::{g_cart_c2r, g_cart_r2c, g_fold, g_unfold};
use crate::error::{Error, Result};
use crate::layers::{
    crelu, ctanh, magnitude, real_activation, Bound, ComplexLayer, ConvF, ConvTF, Gru, Init, Linear, ParamStore,
    RealActivation,
};
use crate::tensor::{ComplexTensor, Shape, Tensor, CHANNEL, FREQ, TIME};

#[derive(Clone, Debug)]
enum RealLayer {
    Conv(ConvF),
    ConvT(ConvTF),
    Gru(Gru),
    Linear(Linear),
}

#[derive(Clone, Debug)]
enum ComplexLayerKind {
    Conv(ComplexLayer<ConvF>),
    ConvT(ComplexLayer<ConvTF>),
    Gru(ComplexLayer<Gru>),
    Linear(ComplexLayer<Linear>),
}

#[derive(Clone, Debug)]
struct BuiltLayer<L> {
    plan: LayerPlan,
    layer: L,
}

#[derive(Clone, Debug)]
struct RealBranch {
    plan: BranchPlan,
    layers: Vec<BuiltLayer<RealLayer>>,
}

#[derive(Clone, Debug)]
struct ComplexBranch {
    plan: BranchPlan,
    layers: Vec<BuiltLayer<ComplexLayerKind>>,
}

/// Graph-level model output.
#[derive(Clone, Copy, Debug)]
pub enum MaskVars {
    Mask(CVar),
    Hybrid { mag_mask: Var, correction: CVar },
}

/// Model output as tensors.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskOutput {
    Mask(ComplexTensor),
    Hybrid { mag_mask: Tensor, correction: ComplexTensor },
}

impl MaskOutput {
    pub fn from_graph(g: &Graph, m: MaskVars) -> MaskOutput {
        match m {
            MaskVars::Mask(z) => MaskOutput::Mask(g.complex_value(z)),
            MaskVars::Hybrid { mag_mask, correction } => MaskOutput::Hybrid {
                mag_mask: g.value(mag_mask).clone(),
                correction: g.complex_value(correction),
            },
        }
    }
}

/// `Ŝ = M ⊙ Y`, or `Ŝ = M_mag ⊙ Y + Ŝ_cc` with every term in `Y`'s scale.
pub fn apply_output(out: &MaskOutput, y: &ComplexTensor) -> Result<ComplexTensor> {
    match out {
        MaskOutput::Mask(m) => m.hadamard(y),
        MaskOutput::Hybrid { mag_mask, correction } => y.scale_by(mag_mask)?.add(correction),
    }
}

/// Graph version of [`apply_output`].
pub fn apply_output_graph(g: &mut Graph, out: MaskVars, y: CVar) -> Result<CVar> {
    match out {
        MaskVars::Mask(m) => g.cmul(m, y),
        MaskVars::Hybrid { mag_mask, correction } => {
            let s = g.cscale_by(y, mag_mask)?;
            g.cadd(s, correction)
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub plan: Plan,
    pub params: ParamStore,
    real: Option<RealBranch>,
    complex: Option<ComplexBranch>,
}

impl Model {
    /// Builds a model with parameters drawn from `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        let plan = Plan::new(spec)?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut params,
            rng: &mut rng,
        };
        let geom = plan.geom;
        let real = match &plan.real {
            Some(bp) => {
                let mut layers = Vec::new();
                for l in bp.layers() {
                    let layer = match l.kind {
                        LayerKind::Conv => RealLayer::Conv(ConvF::new(&mut init, &l.name, l.in_size, l.out_size, geom)?),
                        LayerKind::ConvT => RealLayer::ConvT(ConvTF::new(
                            &mut init, &l.name, l.in_size, l.out_size, geom, l.out_pad,
                        )?),
                        LayerKind::Gru => RealLayer::Gru(Gru::new(&mut init, &l.name, l.in_size, l.out_size)?),
                        LayerKind::Linear => RealLayer::Linear(Linear::new(&mut init, &l.name, l.in_size, l.out_size)?),
                    };
                    layers.push(BuiltLayer { plan: l.clone(), layer });
                }
                Some(RealBranch {
                    plan: bp.clone(),
                    layers,
                })
            }
            None => None,
        };
        let complex = match &plan.complex {
            Some(bp) => {
                let mut layers = Vec::new();
                for l in bp.layers() {
                    let layer = match l.kind {
                        LayerKind::Conv => ComplexLayerKind::Conv(ComplexLayer::<ConvF>::new(
                            &mut init, &l.name, l.in_size, l.out_size, geom,
                        )?),
                        LayerKind::ConvT => ComplexLayerKind::ConvT(ComplexLayer::<ConvTF>::new(
                            &mut init, &l.name, l.in_size, l.out_size, geom, l.out_pad,
                        )?),
                        LayerKind::Gru => ComplexLayerKind::Gru(ComplexLayer::<Gru>::new(
                            &mut init, &l.name, l.in_size, l.out_size,
                        )?),
                        LayerKind::Linear => ComplexLayerKind::Linear(ComplexLayer::<Linear>::new(
                            &mut init, &l.name, l.in_size, l.out_size,
                        )?),
                    };
                    layers.push(BuiltLayer { plan: l.clone(), layer });
                }
                Some(ComplexBranch {
                    plan: bp.clone(),
                    layers,
                })
            }
            None => None,
        };
        let model = Model {
            spec: spec.clone(),
            plan,
            params,
            real,
            complex,
        };
        debug_assert_eq!(model.params.scalar_count(), model.plan.total_params());
        Ok(model)
    }

    pub fn freq_bins(&self) -> usize {
        self.spec.freq_bins
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Runs the network on a normalised `(1, 1, bins, T)` input.
    pub fn forward(&self, g: &mut Graph, p: &Bound, y: CVar) -> Result<MaskVars> {
        let s = g.shape(y.re);
        let bins = self.freq_bins();
        if s.0[0] != 1 || s.0[CHANNEL] != 1 || s.0[FREQ] != bins {
            return Err(Error::Geometry(format!(
                "{} expects input (1, 1, {bins}, T), got {s}",
                self.spec.name
            )));
        }
        match self.spec.domain {
            Domain::Real => {
                let r = self.real.as_ref().expect("real branch");
                g.set_branch(Branch::Real);
                let x = g_cart_c2r(g, y)?;
                let enc = r.encode(g, p, x)?;
                let out = r.decode(g, p, enc)?;
                Ok(MaskVars::Mask(g_cart_r2c(g, out)?))
            }
            Domain::Complex => {
                let c = self.complex.as_ref().expect("complex branch");
                g.set_branch(Branch::Complex);
                let enc = c.encode(g, p, y, self.spec.crelu_variant)?;
                Ok(MaskVars::Mask(c.decode(g, p, enc, self.spec.crelu_variant)?))
            }
            Domain::Hybrid => {
                let r = self.real.as_ref().expect("real branch");
                let c = self.complex.as_ref().expect("complex branch");
                let v = self.spec.crelu_variant;
                g.set_branch(Branch::Real);
                let mag = magnitude(g, y)?;
                let re = r.encode(g, p, mag)?;
                g.set_branch(Branch::Complex);
                let ce = c.encode(g, p, y, v)?;
                // Exchange at the bottleneck.
                let c_as_r = g_cart_c2r(g, ce)?;
                let c_as_r = g_fold(g, c_as_r)?;
                let r_in = g.concat(&[re, c_as_r], CHANNEL)?;
                let r_as_c = g_unfold(g, re)?;
                let r_as_c = g_cart_r2c(g, r_as_c)?;
                let c_in = CVar {
                    re: g.concat(&[ce.re, r_as_c.re], CHANNEL)?,
                    im: g.concat(&[ce.im, r_as_c.im], CHANNEL)?,
                };
                g.set_branch(Branch::Real);
                let mag_mask = r.decode(g, p, r_in)?;
                g.set_branch(Branch::Complex);
                let correction = c.decode(g, p, c_in, v)?;
                g.set_branch(Branch::Real);
                Ok(MaskVars::Hybrid { mag_mask, correction })
            }
        }
    }
}

fn real_act(g: &mut Graph, act: Act, x: Var) -> Result<Var> {
    match act {
        Act::None => Ok(x),
        Act::Relu => real_activation(g, RealActivation::Relu, x),
        Act::Tanh => real_activation(g, RealActivation::Tanh, x),
        Act::Sigmoid => real_activation(g, RealActivation::Sigmoid, x),
        Act::CRelu | Act::CTanh => unreachable!("complex activation in a real branch"),
    }
}

fn complex_act(g: &mut Graph, act: Act, z: CVar, variant: crate::layers::CReluVariant) -> Result<CVar> {
    match act {
        Act::None => Ok(z),
        Act::CRelu => crelu(g, z, variant),
        Act::CTanh => ctanh(g, z),
        _ => unreachable!("real activation in a complex branch"),
    }
}

/// `(1, C, F, T) → (1, 1, C·F, T)`.
fn flatten(g: &mut Graph, x: Var) -> Result<Var> {
    let [_, c, f, t] = g.shape(x).0;
    g.reshape(x, Shape::new(1, 1, c * f, t))
}

fn unflatten(g: &mut Graph, x: Var, (c, f): (usize, usize)) -> Result<Var> {
    let t = g.shape(x).0[TIME];
    g.reshape(x, Shape::new(1, c, f, t))
}

impl RealBranch {
    fn encode(&self, g: &mut Graph, p: &Bound, mut x: Var) -> Result<Var> {
        let n_enc = self.plan.encoder.len();
        for (i, l) in self.layers.iter().enumerate() {
            if i == n_enc && !self.plan.recurrent.is_empty() {
                x = flatten(g, x)?;
            }
            x = match &l.layer {
                RealLayer::Conv(c) => c.forward(g, p, x)?,
                RealLayer::Gru(r) => r.forward(g, p, x)?,
                RealLayer::Linear(lin) => lin.forward(g, p, x)?,
                RealLayer::ConvT(_) => break,
            };
            x = real_act(g, l.plan.act, x)?;
        }
        if !self.plan.recurrent.is_empty() {
            x = unflatten(g, x, self.plan.bottleneck)?;
        }
        Ok(x)
    }

    fn decode(&self, g: &mut Graph, p: &Bound, mut x: Var) -> Result<Var> {
        for l in &self.layers {
            if let RealLayer::ConvT(c) = &l.layer {
                x = c.forward(g, p, x)?;
                x = real_act(g, l.plan.act, x)?;
            }
        }
        Ok(x)
    }
}

impl ComplexBranch {
    fn encode(&self, g: &mut Graph, p: &Bound, mut z: CVar, v: crate::layers::CReluVariant) -> Result<CVar> {
        let n_enc = self.plan.encoder.len();
        let recurrent = !self.plan.recurrent.is_empty();
        for (i, l) in self.layers.iter().enumerate() {
            if i == n_enc && recurrent {
                z = CVar {
                    re: flatten(g, z.re)?,
                    im: flatten(g, z.im)?,
                };
            }
            z = match &l.layer {
                ComplexLayerKind::Conv(c) => c.forward(g, p, z)?,
                ComplexLayerKind::Gru(r) => r.forward(g, p, z)?,
                ComplexLayerKind::Linear(lin) => lin.forward(g, p, z)?,
                ComplexLayerKind::ConvT(_) => break,
            };
            z = complex_act(g, l.plan.act, z, v)?;
        }
        if recurrent {
            z = CVar {
                re: unflatten(g, z.re, self.plan.bottleneck)?,
                im: unflatten(g, z.im, self.plan.bottleneck)?,
            };
        }
        Ok(z)
    }

    fn decode(&self, g: &mut Graph, p: &Bound, mut z: CVar, v: crate::layers::CReluVariant) -> Result<CVar> {
        for l in &self.layers {
            if let ComplexLayerKind::ConvT(c) = &l.layer {
                z = c.forward(g, p, z)?;
                z = complex_act(g, l.plan.act, z, v)?;
            }
        }
        Ok(z)
    }
}

/// Identifies a branch-qualified parameter prefix, e.g. `"real.dec3"`.
pub fn layer_param_names(model: &Model, layer: &str) -> Vec<String> {
    model
        .params
        .iter()
        .filter(|(_, n, _)| n.starts_with(&format!("{layer}.")))
        .map(|(_, n, _)| n.to_string())
        .collect()
}

/// Whether a parameter belongs to the given branch.
pub fn in_branch(name: &str, domain: LayerDomain) -> bool {
    name.starts_with(&format!("{}.", domain.prefix()))
}
