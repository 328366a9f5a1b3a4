//! Raw numeric kernels shared by forward and backward passes.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Elementwise binary op with 4-axis broadcasting.
pub fn broadcast_binary(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        return a.zip_with(b, f);
    }
    let out = Shape::broadcast(sa, sb, op)?;
    if sb.is_scalar() {
        let y = b.data()[0];
        return Ok(a.map(|x| f(x, y)).reshape(out).expect("same numel"));
    }
    if sa.is_scalar() {
        let x = a.data()[0];
        return Ok(b.map(|y| f(x, y)).reshape(out).expect("same numel"));
    }
    let stride_of = |s: Shape| -> [usize; 4] {
        let st = s.strides();
        std::array::from_fn(|ax| if s.0[ax] == 1 { 0 } else { st[ax] })
    };
    let (ka, kb) = (stride_of(sa), stride_of(sb));
    let (da, db) = (a.data(), b.data());
    let [nb, nc, nf, nt] = out.0;
    let mut data = Vec::with_capacity(out.numel());
    for ib in 0..nb {
        for ic in 0..nc {
            for ifr in 0..nf {
                let oa = ib * ka[0] + ic * ka[1] + ifr * ka[2];
                let ob = ib * kb[0] + ic * kb[1] + ifr * kb[2];
                for it in 0..nt {
                    data.push(f(da[oa + it * ka[3]], db[ob + it * kb[3]]));
                }
            }
        }
    }
    Ok(Tensor::from_raw(out, data))
}

fn matrix_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let [b, c, m, n] = t.shape().0;
    if b != 1 || c != 1 {
        return Err(Error::InvalidShape {
            op,
            reason: format!("expected a (1, 1, m, n) matrix, got {}", t.shape()),
        });
    }
    Ok((m, n))
}

/// `a (m×k) · b (k×n)`; returns the product and the number of MACs executed.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<(Tensor, u64)> {
    let (m, k) = matrix_dims(a, "matmul")?;
    let (k2, n) = matrix_dims(b, "matmul")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (da, db) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    let mut macs = 0u64;
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = da[i * k + p];
            let brow = &db[p * n..(p + 1) * n];
            for (o, &x) in row.iter_mut().zip(brow) {
                *o += s * x;
            }
            macs += n as u64;
        }
    }
    Ok((Tensor::from_raw(Shape::matrix(m, n), out), macs))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = matrix_dims(a, "transpose")?;
    let d = a.data();
    Ok(Tensor::from_fn(Shape::matrix(n, m), |[_, _, i, j]| d[j * n + i]))
}

/// Frequency-axis convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn conv_out(&self, f_in: usize) -> Option<usize> {
        let padded = f_in + 2 * self.pad;
        if padded < self.kernel || self.stride == 0 {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    pub fn convt_out(&self, f_in: usize, out_pad: usize) -> Option<usize> {
        if f_in == 0 {
            return None;
        }
        ((f_in - 1) * self.stride + self.kernel + out_pad).checked_sub(2 * self.pad).filter(|&v| v > 0)
    }
}

fn conv_dims(x: &Tensor, w: &Tensor, op: &'static str) -> Result<([usize; 4], [usize; 4])> {
    let xs = x.shape().0;
    let ws = w.shape().0;
    if ws[3] != 1 {
        return Err(Error::InvalidShape {
            op,
            reason: format!("kernel must have time extent 1, got {}", w.shape()),
        });
    }
    Ok((xs, ws))
}

/// `x (B, Ci, F, T)`, `w (Co, Ci, K, 1)`, `bias (1, Co, 1, 1)`.
/// Padding taps are booked as MACs as if the input were zero-padded.
pub fn conv_f(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, g: ConvGeom) -> Result<(Tensor, u64)> {
    let ([nb, ci, nf, nt], [co, wci, k, _]) = conv_dims(x, w, "conv_f")?;
    if wci != ci || k != g.kernel {
        return Err(Error::ShapeMismatch {
            op: "conv_f",
            lhs: x.shape(),
            rhs: w.shape(),
        });
    }
    let f_out = g.conv_out(nf).ok_or_else(|| Error::InvalidShape {
        op: "conv_f",
        reason: format!("frequency extent {nf} with pad {} is shorter than kernel {k}", g.pad),
    })?;
    let out_shape = Shape::new(nb, co, f_out, nt);
    let mut out = vec![0.0; out_shape.numel()];
    let (xd, wd) = (x.data(), w.data());
    let mut macs = 0u64;
    for b in 0..nb {
        for o in 0..co {
            let bo = bias.map_or(0.0, |bt| bt.data()[o]);
            for fo in 0..f_out {
                let orow = &mut out[((b * co + o) * f_out + fo) * nt..][..nt];
                orow.fill(bo);
                for i in 0..ci {
                    for kk in 0..k {
                        macs += nt as u64;
                        let fi = (fo * g.stride + kk) as isize - g.pad as isize;
                        if fi < 0 || fi as usize >= nf {
                            continue;
                        }
                        let wv = wd[(o * ci + i) * k + kk];
                        let xrow = &xd[((b * ci + i) * nf + fi as usize) * nt..][..nt];
                        for (y, &xv) in orow.iter_mut().zip(xrow) {
                            *y += wv * xv;
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::from_raw(out_shape, out), macs))
}

/// Gradients of [`conv_f`] w.r.t. input, weight and bias.
pub fn conv_f_backward(x: &Tensor, w: &Tensor, gout: &Tensor, g: ConvGeom) -> (Tensor, Tensor, Tensor) {
    let [nb, ci, nf, nt] = x.shape().0;
    let [co, _, k, _] = w.shape().0;
    let f_out = gout.shape().0[2];
    let (xd, wd, gd) = (x.data(), w.data(), gout.data());
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; co];
    for b in 0..nb {
        for o in 0..co {
            for fo in 0..f_out {
                let grow = &gd[((b * co + o) * f_out + fo) * nt..][..nt];
                gb[o] += grow.iter().sum::<f64>();
                for i in 0..ci {
                    for kk in 0..k {
                        let fi = (fo * g.stride + kk) as isize - g.pad as isize;
                        if fi < 0 || fi as usize >= nf {
                            continue;
                        }
                        let off = ((b * ci + i) * nf + fi as usize) * nt;
                        let widx = (o * ci + i) * k + kk;
                        let wv = wd[widx];
                        let xrow = &xd[off..off + nt];
                        let mut acc = 0.0;
                        for (gxv, (&gv, &xv)) in gx[off..off + nt].iter_mut().zip(grow.iter().zip(xrow)) {
                            *gxv += wv * gv;
                            acc += gv * xv;
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (
        Tensor::from_raw(x.shape(), gx),
        Tensor::from_raw(w.shape(), gw),
        Tensor::from_raw(Shape::new(1, co, 1, 1), gb),
    )
}

/// Transposed frequency convolution, the adjoint of [`conv_f`] for equal
/// geometry. `x (B, Ci, F, T)`, `w (Ci, Co, K, 1)`, `bias (1, Co, 1, 1)`.
/// Every scattered tap is booked, including those cropped by `pad`.
pub fn conv_t_f(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, g: ConvGeom, out_pad: usize) -> Result<(Tensor, u64)> {
    let ([nb, ci, nf, nt], [wci, co, k, _]) = conv_dims(x, w, "conv_t_f")?;
    if wci != ci || k != g.kernel {
        return Err(Error::ShapeMismatch {
            op: "conv_t_f",
            lhs: x.shape(),
            rhs: w.shape(),
        });
    }
    let f_out = g.convt_out(nf, out_pad).ok_or_else(|| Error::InvalidShape {
        op: "conv_t_f",
        reason: format!("frequency extent {nf} yields an empty output"),
    })?;
    let out_shape = Shape::new(nb, co, f_out, nt);
    let mut out = vec![0.0; out_shape.numel()];
    let (xd, wd) = (x.data(), w.data());
    let mut macs = 0u64;
    for b in 0..nb {
        for i in 0..ci {
            for f in 0..nf {
                let xrow = &xd[((b * ci + i) * nf + f) * nt..][..nt];
                for o in 0..co {
                    for kk in 0..k {
                        macs += nt as u64;
                        let fo = (f * g.stride + kk) as isize - g.pad as isize;
                        if fo < 0 || fo as usize >= f_out {
                            continue;
                        }
                        let wv = wd[(i * co + o) * k + kk];
                        let orow = &mut out[((b * co + o) * f_out + fo as usize) * nt..][..nt];
                        for (y, &xv) in orow.iter_mut().zip(xrow) {
                            *y += wv * xv;
                        }
                    }
                }
            }
        }
        if let Some(bt) = bias {
            for o in 0..co {
                let bo = bt.data()[o];
                for y in &mut out[(b * co + o) * f_out * nt..][..f_out * nt] {
                    *y += bo;
                }
            }
        }
    }
    Ok((Tensor::from_raw(out_shape, out), macs))
}

pub fn conv_t_f_backward(x: &Tensor, w: &Tensor, gout: &Tensor, g: ConvGeom) -> (Tensor, Tensor, Tensor) {
    let [nb, ci, nf, nt] = x.shape().0;
    let [_, co, k, _] = w.shape().0;
    let f_out = gout.shape().0[2];
    let (xd, wd, gd) = (x.data(), w.data(), gout.data());
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; co];
    for b in 0..nb {
        for o in 0..co {
            gb[o] += gd[(b * co + o) * f_out * nt..][..f_out * nt].iter().sum::<f64>();
        }
        for i in 0..ci {
            for f in 0..nf {
                let off = ((b * ci + i) * nf + f) * nt;
                let xrow = &xd[off..off + nt];
                for o in 0..co {
                    for kk in 0..k {
                        let fo = (f * g.stride + kk) as isize - g.pad as isize;
                        if fo < 0 || fo as usize >= f_out {
                            continue;
                        }
                        let widx = (i * co + o) * k + kk;
                        let wv = wd[widx];
                        let grow = &gd[((b * co + o) * f_out + fo as usize) * nt..][..nt];
                        let mut acc = 0.0;
                        for (gxv, (&gv, &xv)) in gx[off..off + nt].iter_mut().zip(grow.iter().zip(xrow)) {
                            *gxv += wv * gv;
                            acc += gv * xv;
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (
        Tensor::from_raw(x.shape(), gx),
        Tensor::from_raw(w.shape(), gw),
        Tensor::from_raw(Shape::new(1, co, 1, 1), gb),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_convolution() {
        let x = Tensor::new(Shape::new(1, 1, 4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(Shape::new(1, 1, 3, 1), vec![1.0, 1.0, 1.0]).unwrap();
        let geom = ConvGeom { kernel: 3, stride: 1, pad: 0 };
        let (y, macs) = conv_f(&x, &w, None, geom).unwrap();
        assert_eq!(y.data(), &[6.0, 9.0]);
        assert_eq!(macs, 6);
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new(Shape::matrix(1, 2), vec![1.0, 0.0]).unwrap();
        let b = Tensor::new(Shape::matrix(2, 1), vec![2.0, 3.0]).unwrap();
        let (c, macs) = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0]);
        assert_eq!(macs, 2);
        assert!(matmul(&a, &a).is_err());
    }
}
