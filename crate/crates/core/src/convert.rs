//! Parameter-free conversions between real and complex representations.
//!
//! Conversions act on the frequency axis:
//!
//! * `mag`: `|Z|` elementwise.
//! * `cart_c2r`: `[re, im]` concatenated along frequency, doubling it.
//! * `cart_r2c`: first half of frequency as `re`, second half as `im`.
//! * `fold_freq_to_channel`: `(C, 2F) → (2C, F)` and its inverse. In
//!   row-major order this is a pure reshape, so scalars inside a
//!   `(channel, frequency)` block keep their order.

use crate::autodiff::{CVar, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Shape, Tensor, CHANNEL, FREQ};

pub fn mag_convert(z: &ComplexTensor) -> Tensor {
    z.abs()
}

fn half_freq(shape: Shape, op: &'static str) -> Result<usize> {
    let f = shape.0[FREQ];
    if f % 2 != 0 {
        return Err(Error::InvalidShape {
            op,
            reason: format!("frequency extent {f} is odd"),
        });
    }
    Ok(f / 2)
}

pub fn cart_r2c(r: &Tensor) -> Result<ComplexTensor> {
    let h = half_freq(r.shape(), "cart_r2c")?;
    ComplexTensor::new(r.slice_axis(FREQ, 0, h)?, r.slice_axis(FREQ, h, h)?)
}

pub fn cart_c2r(z: &ComplexTensor) -> Result<Tensor> {
    Tensor::concat(&[&z.re, &z.im], FREQ)
}

pub fn folded_shape(s: Shape) -> Result<Shape> {
    let h = half_freq(s, "fold_freq_to_channel")?;
    Ok(s.with_axis(CHANNEL, 2 * s.0[CHANNEL]).with_axis(FREQ, h))
}

pub fn unfolded_shape(s: Shape) -> Result<Shape> {
    let c = s.0[CHANNEL];
    if c % 2 != 0 {
        return Err(Error::InvalidShape {
            op: "unfold_channel_to_freq",
            reason: format!("channel extent {c} is odd"),
        });
    }
    Ok(s.with_axis(CHANNEL, c / 2).with_axis(FREQ, 2 * s.0[FREQ]))
}

/// `(B, C, 2F, T) → (B, 2C, F, T)`.
pub fn fold_freq_to_channel(x: &Tensor) -> Result<Tensor> {
    x.reshape(folded_shape(x.shape())?)
}

/// `(B, 2C, F, T) → (B, C, 2F, T)`.
pub fn unfold_channel_to_freq(x: &Tensor) -> Result<Tensor> {
    x.reshape(unfolded_shape(x.shape())?)
}

// Graph versions.

pub fn g_cart_r2c(g: &mut Graph, r: Var) -> Result<CVar> {
    let h = half_freq(g.shape(r), "cart_r2c")?;
    Ok(CVar {
        re: g.slice(r, FREQ, 0, h)?,
        im: g.slice(r, FREQ, h, h)?,
    })
}

pub fn g_cart_c2r(g: &mut Graph, z: CVar) -> Result<Var> {
    g.concat(&[z.re, z.im], FREQ)
}

pub fn g_fold(g: &mut Graph, x: Var) -> Result<Var> {
    let s = folded_shape(g.shape(x))?;
    g.reshape(x, s)
}

pub fn g_unfold(g: &mut Graph, x: Var) -> Result<Var> {
    let s = unfolded_shape(g.shape(x))?;
    g.reshape(x, s)
}
