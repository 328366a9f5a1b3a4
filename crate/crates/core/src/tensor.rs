//! Dense 4-axis tensors.
//!
//! Every tensor has exactly four extents laid out as
//! `(batch, channel, frequency, time)`, row-major with time innermost.
//! Lower-rank data uses extent 1 on the unused axes: a matrix `m × n` is
//! `(1, 1, m, n)`, an audio signal of `L` samples is `(1, 1, 1, L)`.
//!
//! Complex values are never a scalar type. A [`ComplexTensor`] is a pair of
//! real tensors of identical shape.

use std::fmt;

use crate::error::{Error, Result};

pub const BATCH: usize = 0;
pub const CHANNEL: usize = 1;
pub const FREQ: usize = 2;
pub const TIME: usize = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const SCALAR: Shape = Shape([1, 1, 1, 1]);

    pub fn new(b: usize, c: usize, f: usize, t: usize) -> Self {
        Shape([b, c, f, t])
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape([1, 1, rows, cols])
    }

    pub fn signal(len: usize) -> Self {
        Shape([1, 1, 1, len])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> [usize; 4] {
        self.0
    }

    pub fn is_scalar(&self) -> bool {
        self.0 == [1, 1, 1, 1]
    }

    /// Row-major strides.
    pub fn strides(&self) -> [usize; 4] {
        let [_, c, f, t] = self.0;
        [c * f * t, f * t, t, 1]
    }

    pub fn with_axis(mut self, axis: usize, extent: usize) -> Self {
        self.0[axis] = extent;
        self
    }

    /// Broadcast two shapes under the 4-axis convention: per axis the extents
    /// must agree or one of them must be 1.
    pub fn broadcast(a: Shape, b: Shape, op: &'static str) -> Result<Shape> {
        let mut out = [0; 4];
        for ax in 0..4 {
            let (x, y) = (a.0[ax], b.0[ax]);
            out[ax] = if x == y {
                x
            } else if x == 1 {
                y
            } else if y == 1 {
                x
            } else {
                return Err(Error::ShapeMismatch { op, lhs: a, rhs: b });
            };
        }
        Ok(Shape(out))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [b, c, fr, t] = self.0;
        write!(f, "({b}, {c}, {fr}, {t})")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Creates a tensor, rejecting length mismatches and non-finite scalars.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::InvalidShape {
                op: "Tensor::new",
                reason: format!("shape {shape} needs {} scalars, got {}", shape.numel(), data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "Tensor::new" });
        }
        Ok(Tensor { shape, data })
    }

    /// Crate-internal constructor for kernels that have already sized `data`.
    /// Finiteness is checked by the graph after every op.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::from_raw(shape, vec![0.0; shape.numel()])
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor::from_raw(shape, vec![value; shape.numel()])
    }

    pub fn ones(shape: Shape) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::full(Shape::SCALAR, value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let [b, c, fr, t] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for ib in 0..b {
            for ic in 0..c {
                for ifr in 0..fr {
                    for it in 0..t {
                        data.push(f([ib, ic, ifr, it]));
                    }
                }
            }
        }
        Tensor::from_raw(shape, data)
    }

    pub fn from_signal(samples: &[f64]) -> Result<Self> {
        Tensor::new(Shape::signal(samples.len()), samples.to_vec())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn index(&self, idx: [usize; 4]) -> usize {
        let s = self.shape.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2] * s[2] + idx[3]
    }

    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.index(idx)]
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.shape.is_scalar());
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_raw(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Same-shape elementwise combination.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "zip_with",
                lhs: self.shape,
                rhs: other.shape,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_raw(self.shape, data))
    }

    pub fn reshape(&self, shape: Shape) -> Result<Tensor> {
        if shape.numel() != self.numel() {
            return Err(Error::InvalidShape {
                op: "reshape",
                reason: format!("cannot reshape {} into {shape}", self.shape),
            });
        }
        Ok(Tensor::from_raw(shape, self.data.clone()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Materialises a broadcast of `self` to `shape`.
    pub fn broadcast_to(&self, shape: Shape) -> Result<Tensor> {
        let target = Shape::broadcast(self.shape, shape, "broadcast_to")?;
        if target != shape {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                lhs: self.shape,
                rhs: shape,
            });
        }
        let src = self.shape.0;
        let st = self.shape.strides();
        let bs: [usize; 4] = std::array::from_fn(|ax| if src[ax] == 1 { 0 } else { st[ax] });
        Ok(Tensor::from_fn(shape, |[b, c, f, t]| {
            self.data[b * bs[0] + c * bs[1] + f * bs[2] + t * bs[3]]
        }))
    }

    /// Sums over every axis where `shape` has extent 1 and `self` does not.
    pub fn reduce_to(&self, shape: Shape) -> Result<Tensor> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let check = Shape::broadcast(shape, self.shape, "reduce_to")?;
        if check != self.shape {
            return Err(Error::ShapeMismatch {
                op: "reduce_to",
                lhs: self.shape,
                rhs: shape,
            });
        }
        let mut out = Tensor::zeros(shape);
        let dst = shape.0;
        let ds = shape.strides();
        let os: [usize; 4] = std::array::from_fn(|ax| if dst[ax] == 1 { 0 } else { ds[ax] });
        let [b, c, f, t] = self.shape.0;
        let mut k = 0;
        for ib in 0..b {
            for ic in 0..c {
                for ifr in 0..f {
                    let base = ib * os[0] + ic * os[1] + ifr * os[2];
                    for it in 0..t {
                        out.data[base + it * os[3]] += self.data[k];
                        k += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Contiguous sub-range along one axis.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let dims = self.shape.0;
        if start + len > dims[axis] {
            return Err(Error::InvalidShape {
                op: "slice_axis",
                reason: format!("range {start}..{} exceeds extent {} of axis {axis}", start + len, dims[axis]),
            });
        }
        let out_shape = self.shape.with_axis(axis, len);
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.numel());
        for o in 0..outer {
            let base = o * dims[axis] * inner;
            data.extend_from_slice(&self.data[base + start * inner..base + (start + len) * inner]);
        }
        Ok(Tensor::from_raw(out_shape, data))
    }

    /// Concatenates along one axis; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let mut total = 0;
        for p in parts {
            for ax in 0..4 {
                if ax != axis && p.shape.0[ax] != first.shape.0[ax] {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: first.shape,
                        rhs: p.shape,
                    });
                }
            }
            total += p.shape.0[axis];
        }
        let out_shape = first.shape.with_axis(axis, total);
        let outer: usize = first.shape.0[..axis].iter().product();
        let inner: usize = first.shape.0[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.numel());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape.0[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Tensor::from_raw(out_shape, data))
    }
}

/// A complex tensor stored as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl ComplexTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::ShapeMismatch {
                op: "ComplexTensor::new",
                lhs: re.shape(),
                rhs: im.shape(),
            });
        }
        Ok(ComplexTensor { re, im })
    }

    pub fn zeros(shape: Shape) -> Self {
        ComplexTensor {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn from_real(re: Tensor) -> Self {
        let im = Tensor::zeros(re.shape());
        ComplexTensor { re, im }
    }

    pub fn shape(&self) -> Shape {
        self.re.shape()
    }

    pub fn abs(&self) -> Tensor {
        let data = self
            .re
            .data()
            .iter()
            .zip(self.im.data())
            .map(|(a, b)| a.hypot(*b))
            .collect();
        Tensor::from_raw(self.shape(), data)
    }

    /// Elementwise complex product.
    pub fn hadamard(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        let (a, b, c, d) = (&self.re, &self.im, &other.re, &other.im);
        let re = a.zip_with(c, |x, y| x * y)?.zip_with(&b.zip_with(d, |x, y| x * y)?, |p, q| p - q)?;
        let im = a.zip_with(d, |x, y| x * y)?.zip_with(&b.zip_with(c, |x, y| x * y)?, |p, q| p + q)?;
        Ok(ComplexTensor { re, im })
    }

    pub fn scale_by(&self, factor: &Tensor) -> Result<ComplexTensor> {
        Ok(ComplexTensor {
            re: self.re.zip_with(factor, |x, s| x * s)?,
            im: self.im.zip_with(factor, |x, s| x * s)?,
        })
    }

    pub fn add(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        Ok(ComplexTensor {
            re: self.re.zip_with(&other.re, |x, y| x + y)?,
            im: self.im.zip_with(&other.im, |x, y| x + y)?,
        })
    }

    pub fn max_abs_diff(&self, other: &ComplexTensor) -> f64 {
        self.re.max_abs_diff(&other.re).max(self.im.max_abs_diff(&other.im))
    }
}
