//! Complex arithmetic on pairs of graph variables.

use super::{Graph, RadialKind, Var};
use crate::error::Result;
use crate::tensor::ComplexTensor;

/// A complex graph value: handles for the real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl CVar {
    pub fn new(re: Var, im: Var) -> Self {
        CVar { re, im }
    }
}

impl Graph {
    pub fn complex_constant(&mut self, z: ComplexTensor) -> CVar {
        let re = self.constant(z.re);
        let im = self.constant(z.im);
        CVar { re, im }
    }

    pub fn complex_param(&mut self, z: ComplexTensor) -> CVar {
        let re = self.param(z.re);
        let im = self.param(z.im);
        CVar { re, im }
    }

    pub fn complex_value(&self, z: CVar) -> ComplexTensor {
        ComplexTensor {
            re: self.value(z.re).clone(),
            im: self.value(z.im).clone(),
        }
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    pub fn csub(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.sub(a.re, b.re)?,
            im: self.sub(a.im, b.im)?,
        })
    }

    /// Elementwise complex product.
    pub fn cmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let ac = self.mul(a.re, b.re)?;
        let bd = self.mul(a.im, b.im)?;
        let ad = self.mul(a.re, b.im)?;
        let bc = self.mul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(ac, bd)?,
            im: self.add(ad, bc)?,
        })
    }

    /// Multiplies both parts by the same real factor.
    pub fn cscale_by(&mut self, z: CVar, factor: Var) -> Result<CVar> {
        Ok(CVar {
            re: self.mul(z.re, factor)?,
            im: self.mul(z.im, factor)?,
        })
    }

    pub fn cscale(&mut self, z: CVar, s: f64) -> Result<CVar> {
        Ok(CVar {
            re: self.scale(z.re, s)?,
            im: self.scale(z.im, s)?,
        })
    }

    /// `|Z|`, with zero gradient at the origin.
    pub fn cabs(&mut self, z: CVar) -> Result<Var> {
        self.hypot(z.re, z.im)
    }

    /// `Z · s(|Z|)` for a radial scalar field `s`.
    pub fn cradial(&mut self, kind: RadialKind, z: CVar) -> Result<CVar> {
        let s = self.radial(kind, z.re, z.im)?;
        self.cscale_by(z, s)
    }
}
