//! 256-point Hann STFT with 50% overlap and its weighted overlap-add inverse.
//!
//! Frames are taken without padding: a clip of `L ≥ 256` samples yields
//! `T = 1 + (L − 256) / 128` frames and `istft` returns `(T − 1)·128 + 256`
//! samples. The inverse divides the windowed overlap-add by `Σ w²`, so any
//! STFT-consistent spectrogram is reconstructed exactly wherever that sum is
//! non-zero. Only the first sample (where the periodic window is 0) is lost;
//! the first and last [`EDGE_TRIM`] samples are excluded from losses and
//! metrics.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Shape, Tensor, FREQ, TIME};

pub const N_FFT: usize = 256;
pub const HOP: usize = 128;
pub const BINS: usize = N_FFT / 2 + 1;
/// Samples dropped on each side before computing losses and metrics.
pub const EDGE_TRIM: usize = N_FFT;

/// Overlap weights below this are treated as zero by the inverse.
const MIN_WINDOW_SUM: f64 = 1e-10;

/// A one-sided complex spectrogram of shape `(1, 1, BINS, T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub bins: ComplexTensor,
}

impl Spectrogram {
    pub fn new(bins: ComplexTensor) -> Result<Self> {
        let s = bins.shape();
        if s.0[FREQ] != BINS {
            return Err(Error::InvalidShape {
                op: "Spectrogram::new",
                reason: format!("expected {BINS} frequency bins, got shape {s}"),
            });
        }
        Ok(Spectrogram { bins })
    }

    pub fn frames(&self) -> usize {
        self.bins.shape().0[TIME]
    }

    pub fn shape(&self) -> Shape {
        self.bins.shape()
    }
}

/// Periodic Hann window `0.5 − 0.5·cos(2πn/N)`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn frame_count(len: usize) -> Option<usize> {
    (len >= N_FFT).then(|| 1 + (len - N_FFT) / HOP)
}

pub fn signal_len(frames: usize) -> usize {
    (frames - 1) * HOP + N_FFT
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

fn plans() -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(N_FFT),
        inverse: planner.plan_fft_inverse(N_FFT),
        window: hann(N_FFT),
    }
}

/// `Σ_t w²[n − tH]` for a signal of `frames` frames.
fn window_sums(window: &[f64], frames: usize) -> Vec<f64> {
    let mut d = vec![0.0; signal_len(frames)];
    for t in 0..frames {
        for (n, w) in window.iter().enumerate() {
            d[t * HOP + n] += w * w;
        }
    }
    d
}

pub fn stft_samples(samples: &[f64]) -> Result<ComplexTensor> {
    let frames = frame_count(samples.len()).ok_or_else(|| {
        Error::Audio(format!("clip of {} samples is shorter than one {N_FFT}-sample frame", samples.len()))
    })?;
    let p = plans();
    let mut re = vec![0.0; BINS * frames];
    let mut im = vec![0.0; BINS * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    for t in 0..frames {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(p.window[n] * samples[t * HOP + n], 0.0);
        }
        p.forward.process(&mut buf);
        for k in 0..BINS {
            re[k * frames + t] = buf[k].re;
            im[k * frames + t] = buf[k].im;
        }
    }
    let shape = Shape::new(1, 1, BINS, frames);
    ComplexTensor::new(Tensor::new(shape, re)?, Tensor::new(shape, im)?)
}

pub fn stft(clip: &AudioClip) -> Result<Spectrogram> {
    Spectrogram::new(stft_samples(&clip.samples)?)
}

/// Inverse of one batch item; `re`/`im` are `BINS × frames` row-major.
fn istft_item(p: &Plans, re: &[f64], im: &[f64], frames: usize, sums: &[f64], out: &mut [f64]) {
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    for t in 0..frames {
        for k in 0..BINS {
            let v = Complex::new(re[k * frames + t], im[k * frames + t]);
            if k == 0 || k == N_FFT / 2 {
                buf[k] = Complex::new(v.re, 0.0);
            } else {
                buf[k] = v;
                buf[N_FFT - k] = v.conj();
            }
        }
        p.inverse.process(&mut buf);
        for n in 0..N_FFT {
            out[t * HOP + n] += p.window[n] * buf[n].re / N_FFT as f64;
        }
    }
    for (y, &d) in out.iter_mut().zip(sums) {
        *y = if d > MIN_WINDOW_SUM { *y / d } else { 0.0 };
    }
}

/// Inverse STFT of `(B, 1, BINS, T)` parts into `(B, 1, 1, L)`.
pub fn istft_tensor(re: &Tensor, im: &Tensor) -> Result<Tensor> {
    if re.shape() != im.shape() {
        return Err(Error::ShapeMismatch {
            op: "istft",
            lhs: re.shape(),
            rhs: im.shape(),
        });
    }
    let [nb, nc, nf, frames] = re.shape().0;
    if nc != 1 || nf != BINS || frames == 0 {
        return Err(Error::InvalidShape {
            op: "istft",
            reason: format!("expected (B, 1, {BINS}, T), got {}", re.shape()),
        });
    }
    let p = plans();
    let sums = window_sums(&p.window, frames);
    let len = signal_len(frames);
    let item = BINS * frames;
    let mut out = vec![0.0; nb * len];
    for b in 0..nb {
        istft_item(
            &p,
            &re.data()[b * item..(b + 1) * item],
            &im.data()[b * item..(b + 1) * item],
            frames,
            &sums,
            &mut out[b * len..(b + 1) * len],
        );
    }
    Ok(Tensor::from_raw(Shape::new(nb, 1, 1, len), out))
}

/// Adjoint of [`istft_tensor`]: maps a gradient on the `(B, 1, 1, L)`
/// output to gradients on the real and imaginary parts.
pub fn istft_adjoint_tensor(g: &Tensor, spec_shape: Shape, frames: usize) -> Result<(Tensor, Tensor)> {
    let nb = spec_shape.0[0];
    let len = signal_len(frames);
    if g.shape() != Shape::new(nb, 1, 1, len) {
        return Err(Error::InvalidShape {
            op: "istft_adjoint",
            reason: format!("gradient shape {} does not match {frames} frames", g.shape()),
        });
    }
    let p = plans();
    let sums = window_sums(&p.window, frames);
    let item = BINS * frames;
    let mut gre = vec![0.0; nb * item];
    let mut gim = vec![0.0; nb * item];
    let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
    let inv_n = 1.0 / N_FFT as f64;
    for b in 0..nb {
        let gy = &g.data()[b * len..(b + 1) * len];
        for t in 0..frames {
            for (n, slot) in buf.iter_mut().enumerate() {
                let d = sums[t * HOP + n];
                let u = if d > MIN_WINDOW_SUM { p.window[n] * gy[t * HOP + n] / d } else { 0.0 };
                *slot = Complex::new(u, 0.0);
            }
            p.forward.process(&mut buf);
            for k in 0..BINS {
                let idx = b * item + k * frames + t;
                if k == 0 || k == N_FFT / 2 {
                    gre[idx] = buf[k].re * inv_n;
                } else {
                    gre[idx] = 2.0 * buf[k].re * inv_n;
                    gim[idx] = 2.0 * buf[k].im * inv_n;
                }
            }
        }
    }
    Ok((Tensor::from_raw(spec_shape, gre), Tensor::from_raw(spec_shape, gim)))
}

pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let y = istft_tensor(&spec.bins.re, &spec.bins.im)?;
    Ok(AudioClip::new(y.into_data()))
}

/// Drops [`EDGE_TRIM`] samples from each end.
pub fn trim_edges(samples: &[f64]) -> Result<&[f64]> {
    if samples.len() <= 2 * EDGE_TRIM {
        return Err(Error::Audio(format!(
            "clip of {} samples is too short to trim {EDGE_TRIM} samples per side",
            samples.len()
        )));
    }
    Ok(&samples[EDGE_TRIM..samples.len() - EDGE_TRIM])
}

/// Window-weighted time-domain energy `Σ_n (Σ_t w²[n − tH]) x[n]²`, which
/// equals the one-sided spectrogram energy `Σ c_k |X_k|² / N` exactly
/// (`c_k = 1` at DC and Nyquist, 2 otherwise).
pub fn weighted_energy(samples: &[f64]) -> Option<f64> {
    let frames = frame_count(samples.len())?;
    let sums = window_sums(&hann(N_FFT), frames);
    Some(sums.iter().zip(samples).map(|(d, x)| d * x * x).sum())
}

pub fn spectral_energy(spec: &ComplexTensor) -> f64 {
    let frames = spec.shape().0[TIME];
    let mut e = 0.0;
    for k in 0..BINS {
        let c = if k == 0 || k == N_FFT / 2 { 1.0 } else { 2.0 };
        for t in 0..frames {
            let (a, b) = (spec.re.data()[k * frames + t], spec.im.data()[k * frames + t]);
            e += c * (a * a + b * b);
        }
    }
    e / N_FFT as f64
}
