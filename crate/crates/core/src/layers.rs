//! Real layers, their complex lifts and the activations.
//!
//! Layers own no tensors. They hold [`ParamId`]s into a [`ParamStore`],
//! which is bound onto a [`Graph`] before each forward pass.
//!
//! A complex layer is a pair of real layers `(l1, l2)` of identical shape
//! combined as `re = l1(re) − l2(im)`, `im = l1(im) + l2(re)`; biases are
//! part of each real layer and enter that formula unchanged.
//!
//! GRU gates follow the `(reset, update, candidate)` layout with separate
//! input and recurrent biases:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! The complex GRU lifts every affine map and replaces σ and tanh with the
//! complex sigmoid `(1 + ctanh(Z/2)) / 2` and `ctanh`; products are complex.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ActivationKind, CVar, ConvGeom, Graph, RadialKind, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor, FREQ, TIME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

/// Graph handles for every parameter of a store.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Spec(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(t);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Number of stored scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, t: Tensor) -> Result<()> {
        let old = &self.tensors[id.0];
        if old.shape() != t.shape() {
            return Err(Error::ShapeMismatch {
                op: "ParamStore::set",
                lhs: old.shape(),
                rhs: t.shape(),
            });
        }
        self.tensors[id.0] = t;
        Ok(())
    }

    /// Binds every tensor as a tracked leaf (`trainable`) or a constant.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound { vars }
    }
}

/// Parameter initialisation: uniform in `±1/√fan_in`.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: &str, shape: Shape, fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound));
        self.store.add(name, t)
    }
}

// -------------------------------------------------------------------------
// Real layers
// -------------------------------------------------------------------------

/// Dense map over the frequency axis applied at every time step:
/// `(1, 1, in, T) → (1, 1, out, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(Linear {
            w: init.uniform(&format!("{name}.weight"), Shape::matrix(out_dim, in_dim), in_dim)?,
            b: init.uniform(&format!("{name}.bias"), Shape::new(1, 1, out_dim, 1), in_dim)?,
            in_dim,
            out_dim,
        })
    }

    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim + out_dim
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(p.var(self.w), x)?;
        g.add(y, p.var(self.b))
    }
}

/// Convolution along frequency with a `kernel × 1` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvF {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: ConvGeom,
}

impl ConvF {
    pub fn new(init: &mut Init, name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom) -> Result<Self> {
        let fan_in = in_ch * geom.kernel;
        Ok(ConvF {
            w: init.uniform(&format!("{name}.weight"), Shape::new(out_ch, in_ch, geom.kernel, 1), fan_in)?,
            b: init.uniform(&format!("{name}.bias"), Shape::new(1, out_ch, 1, 1), fan_in)?,
            in_ch,
            out_ch,
            geom,
        })
    }

    pub fn param_count(in_ch: usize, out_ch: usize, kernel: usize) -> usize {
        in_ch * out_ch * kernel + out_ch
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv_f(x, p.var(self.w), Some(p.var(self.b)), self.geom)
    }
}

/// Transposed convolution along frequency; weight layout `(in, out, K, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTF {
    pub w: ParamId,
    pub b: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub geom: ConvGeom,
    pub out_pad: usize,
}

impl ConvTF {
    pub fn new(init: &mut Init, name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom, out_pad: usize) -> Result<Self> {
        let fan_in = in_ch * geom.kernel;
        Ok(ConvTF {
            w: init.uniform(&format!("{name}.weight"), Shape::new(in_ch, out_ch, geom.kernel, 1), fan_in)?,
            b: init.uniform(&format!("{name}.bias"), Shape::new(1, out_ch, 1, 1), fan_in)?,
            in_ch,
            out_ch,
            geom,
            out_pad,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv_t_f(x, p.var(self.w), Some(p.var(self.b)), self.geom, self.out_pad)
    }
}

/// Unidirectional GRU over the time axis: `(1, 1, in, T) → (1, 1, h, T)`,
/// initial state zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(init: &mut Init, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let h3 = 3 * hidden;
        Ok(Gru {
            w_ih: init.uniform(&format!("{name}.weight_ih"), Shape::matrix(h3, input), hidden)?,
            w_hh: init.uniform(&format!("{name}.weight_hh"), Shape::matrix(h3, hidden), hidden)?,
            b_ih: init.uniform(&format!("{name}.bias_ih"), Shape::new(1, 1, h3, 1), hidden)?,
            b_hh: init.uniform(&format!("{name}.bias_hh"), Shape::new(1, 1, h3, 1), hidden)?,
            input,
            hidden,
        })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * (input * hidden + hidden * hidden + 2 * hidden)
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<usize> {
        let s = g.shape(x);
        if s.0[0] != 1 || s.0[1] != 1 || s.0[FREQ] != self.input {
            return Err(Error::InvalidShape {
                op: "gru",
                reason: format!("expected (1, 1, {}, T), got {s}", self.input),
            });
        }
        Ok(s.0[TIME])
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let steps = self.check_input(g, x)?;
        let h = self.hidden;
        let gi = g.matmul(p.var(self.w_ih), x)?;
        let gi = g.add(gi, p.var(self.b_ih))?;
        let gates: Vec<Var> = (0..3).map(|k| g.slice(gi, FREQ, k * h, h)).collect::<Result<_>>()?;
        let mut state = g.constant(Tensor::zeros(Shape::matrix(h, 1)));
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xr = g.slice(gates[0], TIME, t, 1)?;
            let xz = g.slice(gates[1], TIME, t, 1)?;
            let xn = g.slice(gates[2], TIME, t, 1)?;
            let gh = g.matmul(p.var(self.w_hh), state)?;
            let gh = g.add(gh, p.var(self.b_hh))?;
            let hr = g.slice(gh, FREQ, 0, h)?;
            let hz = g.slice(gh, FREQ, h, h)?;
            let hn = g.slice(gh, FREQ, 2 * h, h)?;
            let r = g.add(xr, hr)?;
            let r = g.sigmoid(r)?;
            let z = g.add(xz, hz)?;
            let z = g.sigmoid(z)?;
            let rn = g.mul(r, hn)?;
            let n = g.add(xn, rn)?;
            let n = g.tanh(n)?;
            let d = g.sub(state, n)?;
            let zd = g.mul(z, d)?;
            state = g.add(n, zd)?;
            outs.push(state);
        }
        g.concat(&outs, TIME)
    }
}

// -------------------------------------------------------------------------
// Complex lifts
// -------------------------------------------------------------------------

/// Applies a real layer pair as a complex layer.
pub fn complex_lift(
    g: &mut Graph,
    z: CVar,
    mut l1: impl FnMut(&mut Graph, Var) -> Result<Var>,
    mut l2: impl FnMut(&mut Graph, Var) -> Result<Var>,
) -> Result<CVar> {
    let a = l1(g, z.re)?;
    let b = l2(g, z.im)?;
    let c = l1(g, z.im)?;
    let d = l2(g, z.re)?;
    Ok(CVar {
        re: g.sub(a, b)?,
        im: g.add(c, d)?,
    })
}

/// Two real layers of the same kind and shape forming one complex layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexLayer<L> {
    pub l1: L,
    pub l2: L,
}

impl ComplexLayer<Linear> {
    pub fn new(init: &mut Init, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(ComplexLayer {
            l1: Linear::new(init, &format!("{name}.l1"), in_dim, out_dim)?,
            l2: Linear::new(init, &format!("{name}.l2"), in_dim, out_dim)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: CVar) -> Result<CVar> {
        complex_lift(g, z, |g, x| self.l1.forward(g, p, x), |g, x| self.l2.forward(g, p, x))
    }
}

impl ComplexLayer<ConvF> {
    pub fn new(init: &mut Init, name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom) -> Result<Self> {
        Ok(ComplexLayer {
            l1: ConvF::new(init, &format!("{name}.l1"), in_ch, out_ch, geom)?,
            l2: ConvF::new(init, &format!("{name}.l2"), in_ch, out_ch, geom)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: CVar) -> Result<CVar> {
        complex_lift(g, z, |g, x| self.l1.forward(g, p, x), |g, x| self.l2.forward(g, p, x))
    }
}

impl ComplexLayer<ConvTF> {
    pub fn new(init: &mut Init, name: &str, in_ch: usize, out_ch: usize, geom: ConvGeom, out_pad: usize) -> Result<Self> {
        Ok(ComplexLayer {
            l1: ConvTF::new(init, &format!("{name}.l1"), in_ch, out_ch, geom, out_pad)?,
            l2: ConvTF::new(init, &format!("{name}.l2"), in_ch, out_ch, geom, out_pad)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, z: CVar) -> Result<CVar> {
        complex_lift(g, z, |g, x| self.l1.forward(g, p, x), |g, x| self.l2.forward(g, p, x))
    }
}

impl ComplexLayer<Gru> {
    pub fn new(init: &mut Init, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(ComplexLayer {
            l1: Gru::new(init, &format!("{name}.l1"), input, hidden)?,
            l2: Gru::new(init, &format!("{name}.l2"), input, hidden)?,
        })
    }

    /// Complex GRU with lifted affine maps and complex gate nonlinearities.
    pub fn forward(&self, g: &mut Graph, p: &Bound, z: CVar) -> Result<CVar> {
        let (a, b) = (&self.l1, &self.l2);
        let steps = a.check_input(g, z.re)?;
        a.check_input(g, z.im)?;
        let h = a.hidden;
        let affine = |g: &mut Graph, w: ParamId, bias: ParamId, x: Var| -> Result<Var> {
            let y = g.matmul(p.var(w), x)?;
            g.add(y, p.var(bias))
        };
        let gi = complex_lift(g, z, |g, x| affine(g, a.w_ih, a.b_ih, x), |g, x| affine(g, b.w_ih, b.b_ih, x))?;
        let split = |g: &mut Graph, v: CVar, k: usize| -> Result<CVar> {
            Ok(CVar {
                re: g.slice(v.re, FREQ, k * h, h)?,
                im: g.slice(v.im, FREQ, k * h, h)?,
            })
        };
        let column = |g: &mut Graph, v: CVar, t: usize| -> Result<CVar> {
            Ok(CVar {
                re: g.slice(v.re, TIME, t, 1)?,
                im: g.slice(v.im, TIME, t, 1)?,
            })
        };
        let gates = [split(g, gi, 0)?, split(g, gi, 1)?, split(g, gi, 2)?];
        let zero = Tensor::zeros(Shape::matrix(h, 1));
        let mut state = CVar {
            re: g.constant(zero.clone()),
            im: g.constant(zero),
        };
        let (mut outs_re, mut outs_im) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for t in 0..steps {
            let xr = column(g, gates[0], t)?;
            let xz = column(g, gates[1], t)?;
            let xn = column(g, gates[2], t)?;
            let gh = complex_lift(
                g,
                state,
                |g, x| affine(g, a.w_hh, a.b_hh, x),
                |g, x| affine(g, b.w_hh, b.b_hh, x),
            )?;
            let hr = split(g, gh, 0)?;
            let hz = split(g, gh, 1)?;
            let hn = split(g, gh, 2)?;
            let r = g.cadd(xr, hr)?;
            let r = csigmoid(g, r)?;
            let zg = g.cadd(xz, hz)?;
            let zg = csigmoid(g, zg)?;
            let rn = g.cmul(r, hn)?;
            let n = g.cadd(xn, rn)?;
            let n = g.cradial(RadialKind::CTanh, n)?;
            let d = g.csub(state, n)?;
            let zd = g.cmul(zg, d)?;
            state = g.cadd(n, zd)?;
            outs_re.push(state.re);
            outs_im.push(state.im);
        }
        Ok(CVar {
            re: g.concat(&outs_re, TIME)?,
            im: g.concat(&outs_im, TIME)?,
        })
    }
}

// -------------------------------------------------------------------------
// Activations
// -------------------------------------------------------------------------

/// Which form of the complex ReLU to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CReluVariant {
    /// `Z/2 · (1 + 1/(|Z| + 0.01))`
    #[default]
    Printed,
    /// `Z/2 · (1 + Z/(|Z| + 0.01))` with a complex product.
    Corrected,
}

impl std::str::FromStr for CReluVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "printed" => Ok(CReluVariant::Printed),
            "corrected" => Ok(CReluVariant::Corrected),
            other => Err(format!("unknown cReLU variant `{other}` (expected printed or corrected)")),
        }
    }
}

fn numel(g: &Graph, v: Var) -> usize {
    g.shape(v).numel()
}

pub fn crelu(g: &mut Graph, z: CVar, variant: CReluVariant) -> Result<CVar> {
    g.book_activation(ActivationKind::CRelu, numel(g, z.re));
    match variant {
        CReluVariant::Printed => g.cradial(RadialKind::CReluPrinted, z),
        CReluVariant::Corrected => {
            let half = g.cscale(z, 0.5)?;
            let sq = g.cmul(z, z)?;
            let coef = g.radial(RadialKind::CReluCorrectedCoef, z.re, z.im)?;
            let t = g.cscale_by(sq, coef)?;
            g.cadd(half, t)
        }
    }
}

pub fn ctanh(g: &mut Graph, z: CVar) -> Result<CVar> {
    g.book_activation(ActivationKind::CTanh, numel(g, z.re));
    g.cradial(RadialKind::CTanh, z)
}

/// `(1 + ctanh(Z/2)) / 2`.
pub fn csigmoid(g: &mut Graph, z: CVar) -> Result<CVar> {
    let half = g.cscale(z, 0.5)?;
    let t = g.cradial(RadialKind::CTanh, half)?;
    let t = g.cscale(t, 0.5)?;
    Ok(CVar {
        re: g.add_scalar(t.re, 0.5)?,
        im: t.im,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RealActivation {
    Relu,
    Tanh,
    Sigmoid,
}

pub fn real_activation(g: &mut Graph, kind: RealActivation, x: Var) -> Result<Var> {
    g.book_activation(ActivationKind::Real, numel(g, x));
    match kind {
        RealActivation::Relu => g.relu(x),
        RealActivation::Tanh => g.tanh(x),
        RealActivation::Sigmoid => g.sigmoid(x),
    }
}

/// `|Z|` as a booked conversion.
pub fn magnitude(g: &mut Graph, z: CVar) -> Result<Var> {
    g.book_activation(ActivationKind::Magnitude, numel(g, z.re));
    g.cabs(z)
}

/// Scalar reference implementations used by tests and tooling.
pub mod scalar {
    use crate::autodiff::CRELU_OFFSET;

    pub fn crelu_printed(re: f64, im: f64) -> (f64, f64) {
        let s = 0.5 * (1.0 + 1.0 / (re.hypot(im) + CRELU_OFFSET));
        (re * s, im * s)
    }

    pub fn crelu_corrected(re: f64, im: f64) -> (f64, f64) {
        let c = 0.5 / (re.hypot(im) + CRELU_OFFSET);
        (0.5 * re + c * (re * re - im * im), 0.5 * im + c * 2.0 * re * im)
    }

    pub fn ctanh(re: f64, im: f64) -> (f64, f64) {
        let s = 1.0 / (re * re + im * im + 1.0).sqrt();
        (re * s, im * s)
    }
}
