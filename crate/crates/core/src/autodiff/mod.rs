//! Reverse-mode automatic differentiation over real tensors.
//!
//! A [`Graph`] is an append-only arena of nodes. Every op evaluates eagerly,
//! stores its output and records how to propagate gradients. [`Var`] is a
//! copyable handle into the arena, so inputs always precede outputs and the
//! backward pass is a single reverse sweep.
//!
//! Leaves created with [`Graph::param`] are tracked; [`Graph::constant`]
//! leaves are not. A node is tracked when any of its inputs is, and
//! [`Graph::backward`] returns gradients for tracked nodes only.

mod check;
mod complex;
pub mod kernels;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor, TIME};

pub use check::{compare_gradients, finite_difference_grad, GradCheck};
pub use complex::CVar;
pub use kernels::ConvGeom;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which branch of a hybrid network MACs are booked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Real,
    Complex,
}

/// Per-element cost of activations and conversions, in MACs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationCosts {
    pub crelu: u64,
    pub ctanh: u64,
    pub magnitude: u64,
    pub real: u64,
}

impl Default for ActivationCosts {
    fn default() -> Self {
        ActivationCosts {
            crelu: 5,
            ctanh: 4,
            magnitude: 3,
            real: 1,
        }
    }
}

impl ActivationCosts {
    pub const ZERO: ActivationCosts = ActivationCosts {
        crelu: 0,
        ctanh: 0,
        magnitude: 0,
        real: 0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    CRelu,
    CTanh,
    Magnitude,
    Real,
}

/// Instrumented multiply-accumulate counter.
#[derive(Clone, Debug, PartialEq)]
pub struct MacCounter {
    pub real: u64,
    pub complex: u64,
    pub costs: ActivationCosts,
    branch: Branch,
}

impl MacCounter {
    pub fn new(costs: ActivationCosts) -> Self {
        MacCounter {
            real: 0,
            complex: 0,
            costs,
            branch: Branch::Real,
        }
    }

    pub fn total(&self) -> u64 {
        self.real + self.complex
    }

    fn add(&mut self, n: u64) {
        match self.branch {
            Branch::Real => self.real += n,
            Branch::Complex => self.complex += n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Unary {
    Neg,
    Scale(f64),
    AddScalar(f64),
    Sqrt,
    Log10,
    Exp,
    Abs,
    Clamp(f64, f64),
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    /// `a / b` where `b != 0`, otherwise 0. Same-shape operands.
    SafeDiv(Var, Var),
    Hypot(Var, Var),
    /// Radial factor `s(|Z|)` of a complex activation `Z · s(|Z|)`.
    Radial(RadialKind, Var, Var),
    Sum(Var),
    MatMul(Var, Var),
    Reshape(Var),
    Slice { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    ConvT { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Istft { re: Var, im: Var },
}

/// Radial scalar fields used by the complex activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadialKind {
    /// `(1 + 1/(r + 0.01)) / 2`
    CReluPrinted,
    /// `1 / (2 (r + 0.01))`
    CReluCorrectedCoef,
    /// `1 / sqrt(r² + 1)`
    CTanh,
}

pub(crate) const CRELU_OFFSET: f64 = 0.01;

impl RadialKind {
    fn value(self, r: f64) -> f64 {
        match self {
            RadialKind::CReluPrinted => 0.5 * (1.0 + 1.0 / (r + CRELU_OFFSET)),
            RadialKind::CReluCorrectedCoef => 0.5 / (r + CRELU_OFFSET),
            RadialKind::CTanh => 1.0 / (r * r + 1.0).sqrt(),
        }
    }

    /// `ds/dr`.
    fn derivative(self, r: f64) -> f64 {
        match self {
            RadialKind::CReluPrinted | RadialKind::CReluCorrectedCoef => -0.5 / ((r + CRELU_OFFSET) * (r + CRELU_OFFSET)),
            RadialKind::CTanh => -r / (r * r + 1.0).powf(1.5),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    macs: Option<MacCounter>,
}

/// Gradients of tracked nodes, keyed by handle.
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.map.get(&v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn unary_name(u: Unary) -> &'static str {
    match u {
        Unary::Neg => "neg",
        Unary::Scale(_) => "scale",
        Unary::AddScalar(_) => "add_scalar",
        Unary::Sqrt => "sqrt",
        Unary::Log10 => "log10",
        Unary::Exp => "exp",
        Unary::Abs => "abs",
        Unary::Clamp(..) => "clamp",
        Unary::Relu => "relu",
        Unary::Tanh => "tanh",
        Unary::Sigmoid => "sigmoid",
    }
}

fn binary_name(b: Binary) -> &'static str {
    match b {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "mul",
        Binary::Div => "div",
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A graph whose layer ops increment a MAC counter.
    pub fn with_mac_counter(costs: ActivationCosts) -> Self {
        Graph {
            nodes: Vec::new(),
            macs: Some(MacCounter::new(costs)),
        }
    }

    pub fn macs(&self) -> Option<&MacCounter> {
        self.macs.as_ref()
    }

    pub fn set_branch(&mut self, branch: Branch) {
        if let Some(m) = &mut self.macs {
            m.branch = branch;
        }
    }

    /// Books `elements` applications of an activation at its configured cost.
    pub fn book_activation(&mut self, kind: ActivationKind, elements: usize) {
        if let Some(m) = &mut self.macs {
            let per = match kind {
                ActivationKind::CRelu => m.costs.crelu,
                ActivationKind::CTanh => m.costs.ctanh,
                ActivationKind::Magnitude => m.costs.magnitude,
                ActivationKind::Real => m.costs.real,
            };
            m.add(per * elements as u64);
        }
    }

    fn book(&mut self, n: u64) {
        if let Some(m) = &mut self.macs {
            m.add(n);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op: if tracked { op } else { Op::Leaf },
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    // ---------------------------------------------------------------------
    // Elementwise
    // ---------------------------------------------------------------------

    fn unary(&mut self, u: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        let value = match u {
            Unary::Neg => x.map(|v| -v),
            Unary::Scale(s) => x.map(|v| v * s),
            Unary::AddScalar(s) => x.map(|v| v + s),
            Unary::Sqrt => {
                if x.data().iter().any(|&v| v < 0.0) {
                    return Err(Error::domain("sqrt", "negative operand"));
                }
                x.map(f64::sqrt)
            }
            Unary::Log10 => {
                if x.data().iter().any(|&v| v <= 0.0) {
                    return Err(Error::domain("log10", "non-positive operand"));
                }
                x.map(f64::log10)
            }
            Unary::Exp => x.map(f64::exp),
            Unary::Abs => x.map(f64::abs),
            Unary::Clamp(lo, hi) => x.map(|v| v.clamp(lo, hi)),
            Unary::Relu => x.map(|v| v.max(0.0)),
            Unary::Tanh => x.map(f64::tanh),
            Unary::Sigmoid => x.map(sigmoid),
        };
        self.push(value, Op::Unary(u, a), &[a], unary_name(u))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Neg, a)
    }
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary(Unary::Scale(s), a)
    }
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary(Unary::AddScalar(s), a)
    }
    /// Square root; the gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sqrt, a)
    }
    /// Base-10 logarithm; non-positive operands are an error.
    pub fn log10(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log10, a)
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }
    /// Absolute value with subgradient 0 at 0.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Abs, a)
    }
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(Unary::Clamp(lo, hi), a)
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let name = binary_name(op);
        let (x, y) = (self.value(a), self.value(b));
        let value = match op {
            Binary::Add => kernels::broadcast_binary(x, y, name, |p, q| p + q)?,
            Binary::Sub => kernels::broadcast_binary(x, y, name, |p, q| p - q)?,
            Binary::Mul => kernels::broadcast_binary(x, y, name, |p, q| p * q)?,
            Binary::Div => kernels::broadcast_binary(x, y, name, |p, q| p / q)?,
        };
        self.push(value, Op::Binary(op, a, b), &[a, b], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }
    /// Division; a zero divisor yields a non-finite error.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    /// `a / b` with the result (and its gradient) defined as 0 where `b == 0`.
    /// Shapes must match exactly.
    pub fn safe_div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self
            .value(a)
            .zip_with(self.value(b), |p, q| if q == 0.0 { 0.0 } else { p / q })?;
        self.push(value, Op::SafeDiv(a, b), &[a, b], "safe_div")
    }

    /// `sqrt(a² + b²)` with zero gradient at the origin. Shapes must match
    /// exactly.
    pub fn hypot(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), f64::hypot)?;
        self.push(value, Op::Hypot(a, b), &[a, b], "hypot")
    }

    /// Radial factor `s(|Z|)` for `Z = re + i·im`.
    pub fn radial(&mut self, kind: RadialKind, re: Var, im: Var) -> Result<Var> {
        let value = self
            .value(re)
            .zip_with(self.value(im), |a, b| kind.value(a.hypot(b)))?;
        self.push(value, Op::Radial(kind, re, im), &[re, im], "radial")
    }

    // ---------------------------------------------------------------------
    // Structural
    // ---------------------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum of elementwise products.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    /// Matrix product of `(1, 1, m, k)` and `(1, 1, k, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, macs) = kernels::matmul(self.value(a), self.value(b))?;
        self.book(macs);
        self.push(value, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.push(value, Op::Reshape(a), &[a], "reshape")
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(a).slice_axis(axis, start, len)?;
        self.push(value, Op::Slice { x: a, axis, start }, &[a], "slice")
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let value = {
            let ts: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor::concat(&ts, axis)?
        };
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
            "concat",
        )
    }

    // ---------------------------------------------------------------------
    // Layers and signal ops
    // ---------------------------------------------------------------------

    pub fn conv_f(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (value, macs) = kernels::conv_f(self.value(x), self.value(w), b.map(|b| self.value(b)), geom)?;
        self.book(macs);
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(value, Op::Conv { x, w, b, geom }, &inputs, "conv_f")
    }

    pub fn conv_t_f(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom, out_pad: usize) -> Result<Var> {
        let (value, macs) = kernels::conv_t_f(self.value(x), self.value(w), b.map(|b| self.value(b)), geom, out_pad)?;
        self.book(macs);
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        self.push(value, Op::ConvT { x, w, b, geom }, &inputs, "conv_t_f")
    }

    /// Inverse STFT of `(B, 1, bins, T)` real/imaginary parts into
    /// `(B, 1, 1, L)` signals.
    pub fn istft(&mut self, re: Var, im: Var) -> Result<Var> {
        let value = crate::dsp::stft::istft_tensor(self.value(re), self.value(im))?;
        self.push(value, Op::Istft { re, im }, &[re, im], "istft")
    }

    // ---------------------------------------------------------------------
    // Backward
    // ---------------------------------------------------------------------

    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.shape(root);
        if !shape.is_scalar() {
            return Err(Error::NonScalarRoot(shape));
        }
        let mut out = Gradients::default();
        if !self.nodes[root.0].tracked {
            return Ok(out);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                out.map.insert(Var(i), g);
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Unary(u, a) => {
                let x = self.value(*a);
                let d = match *u {
                    Unary::Neg => g.map(|v| -v),
                    Unary::Scale(s) => g.map(|v| v * s),
                    Unary::AddScalar(_) => g.clone(),
                    Unary::Sqrt => g.zip_with(out, |gv, y| if y > 0.0 { 0.5 * gv / y } else { 0.0 })?,
                    Unary::Log10 => g.zip_with(x, |gv, xv| gv / (xv * std::f64::consts::LN_10))?,
                    Unary::Exp => g.zip_with(out, |gv, y| gv * y)?,
                    Unary::Abs => g.zip_with(x, |gv, xv| if xv == 0.0 { 0.0 } else { gv * xv.signum() })?,
                    Unary::Clamp(lo, hi) => g.zip_with(x, |gv, xv| if xv >= lo && xv <= hi { gv } else { 0.0 })?,
                    Unary::Relu => g.zip_with(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?,
                    Unary::Tanh => g.zip_with(out, |gv, y| gv * (1.0 - y * y))?,
                    Unary::Sigmoid => g.zip_with(out, |gv, y| gv * y * (1.0 - y))?,
                };
                self.accumulate(grads, *a, d);
            }
            Op::Binary(op, a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (x, y) = (self.value(*a), self.value(*b));
                let (da, db) = match op {
                    Binary::Add => (g.clone(), g.clone()),
                    Binary::Sub => (g.clone(), g.map(|v| -v)),
                    Binary::Mul => (
                        kernels::broadcast_binary(g, y, "mul", |p, q| p * q)?,
                        kernels::broadcast_binary(g, x, "mul", |p, q| p * q)?,
                    ),
                    Binary::Div => {
                        let ga = kernels::broadcast_binary(g, y, "div", |p, q| p / q)?;
                        let t = g.zip_with(out, |p, q| p * q)?;
                        (ga, kernels::broadcast_binary(&t, y, "div", |p, q| -p / q)?)
                    }
                };
                if self.nodes[a.0].tracked {
                    self.accumulate(grads, *a, da.reduce_to(sa)?);
                }
                if self.nodes[b.0].tracked {
                    self.accumulate(grads, *b, db.reduce_to(sb)?);
                }
            }
            Op::SafeDiv(a, b) => {
                let y = self.value(*b);
                let da = g.zip_with(y, |gv, q| if q == 0.0 { 0.0 } else { gv / q })?;
                let t = g.zip_with(out, |p, q| p * q)?;
                let db = t.zip_with(y, |p, q| if q == 0.0 { 0.0 } else { -p / q })?;
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Hypot(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let ratio = |num: &Tensor| -> Result<Tensor> {
                    let q = g.zip_with(out, |gv, r| if r > 0.0 { gv / r } else { 0.0 })?;
                    q.zip_with(num, |p, n| p * n)
                };
                self.accumulate(grads, *a, ratio(x)?);
                self.accumulate(grads, *b, ratio(y)?);
            }
            Op::Radial(kind, re, im) => {
                let (x, y) = (self.value(*re), self.value(*im));
                let n = x.numel();
                let (mut dx, mut dy) = (vec![0.0; n], vec![0.0; n]);
                for k in 0..n {
                    let (a, b) = (x.data()[k], y.data()[k]);
                    let r = a.hypot(b);
                    if r > 0.0 {
                        let c = g.data()[k] * kind.derivative(r) / r;
                        dx[k] = c * a;
                        dy[k] = c * b;
                    }
                }
                self.accumulate(grads, *re, Tensor::from_raw(x.shape(), dx));
                self.accumulate(grads, *im, Tensor::from_raw(y.shape(), dy));
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, Tensor::full(self.shape(*a), g.item()));
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].tracked {
                    let (da, _) = kernels::matmul(g, &kernels::transpose(y)?)?;
                    self.accumulate(grads, *a, da);
                }
                if self.nodes[b.0].tracked {
                    let (db, _) = kernels::matmul(&kernels::transpose(x)?, g)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, g.reshape(self.shape(*a))?);
            }
            Op::Slice { x, axis, start } => {
                if self.nodes[x.0].tracked {
                    let src = self.shape(*x);
                    let slot = grads[x.0].get_or_insert_with(|| Tensor::zeros(src));
                    add_region(slot, g, *axis, *start);
                }
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p).0[*axis];
                    if self.nodes[p.0].tracked {
                        self.accumulate(grads, p, g.slice_axis(*axis, offset, len)?);
                    }
                    offset += len;
                }
            }
            Op::Conv { x, w, b, geom } => {
                let (gx, gw, gb) = kernels::conv_f_backward(self.value(*x), self.value(*w), g, *geom);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
                if let Some(b) = b {
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::ConvT { x, w, b, geom } => {
                let (gx, gw, gb) = kernels::conv_t_f_backward(self.value(*x), self.value(*w), g, *geom);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
                if let Some(b) = b {
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Istft { re, im } => {
                let frames = self.shape(*re).0[TIME];
                let (gre, gim) = crate::dsp::stft::istft_adjoint_tensor(g, self.shape(*re), frames)?;
                self.accumulate(grads, *re, gre);
                self.accumulate(grads, *im, gim);
            }
        }
        Ok(())
    }
}

/// Adds `g` into the sub-range of `dst` that starts at `start` along `axis`.
fn add_region(dst: &mut Tensor, g: &Tensor, axis: usize, start: usize) {
    let dims = dst.shape().0;
    let len = g.shape().0[axis];
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let chunk = len * inner;
    let gd = g.data();
    let dd = dst.data_mut();
    for o in 0..outer {
        let base = (o * dims[axis] + start) * inner;
        for (d, &v) in dd[base..base + chunk].iter_mut().zip(&gd[o * chunk..(o + 1) * chunk]) {
            *d += v;
        }
    }
}
