//! Logarithmic magnitude warping and its inverse.
//!
//! `X = 20·log10(|Y| + 1e-8)` is mapped from `[-80, 0]` dB to `[0, 1]` and
//! clamped. Phase is kept separately as `Y / |Y|` (0 where `|Y| = 0`).

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use super::stft::Spectrogram;
use crate::autodiff::{CVar, Graph};
use crate::error::Result;
use crate::tensor::{ComplexTensor, Tensor};

pub const FLOOR_DB: f64 = -80.0;
pub const REF_DB: f64 = 0.0;
pub const MAG_EPS: f64 = 1e-8;

/// How the complex-valued input is formed from a spectrogram.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Warped magnitude recombined with the original phase.
    #[default]
    Warped,
    /// The spectrogram as-is.
    RawComplex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSpec {
    pub mag01: Tensor,
    pub phase: ComplexTensor,
}

pub fn warp(mag: f64) -> f64 {
    let db = 20.0 * (mag + MAG_EPS).log10();
    ((db - FLOOR_DB) / (REF_DB - FLOOR_DB)).clamp(0.0, 1.0)
}

pub fn unwarp(m: f64) -> f64 {
    let db = FLOOR_DB + (REF_DB - FLOOR_DB) * m;
    (10f64.powf(db / 20.0) - MAG_EPS).max(0.0)
}

pub fn normalize(spec: &Spectrogram) -> NormalizedSpec {
    let y = &spec.bins;
    let mag = y.abs();
    let phase_part = |part: &Tensor| {
        part.zip_with(&mag, |v, m| if m > 0.0 { v / m } else { 0.0 })
            .expect("same shape")
    };
    NormalizedSpec {
        mag01: mag.map(warp),
        phase: ComplexTensor {
            re: phase_part(&y.re),
            im: phase_part(&y.im),
        },
    }
}

pub fn denormalize(n: &NormalizedSpec) -> Result<Spectrogram> {
    let mag = n.mag01.map(unwarp);
    Spectrogram::new(n.phase.scale_by(&mag)?)
}

impl NormalizedSpec {
    /// The complex tensor a model consumes.
    pub fn network_input(&self, spec: &Spectrogram, mode: InputMode) -> ComplexTensor {
        match mode {
            InputMode::Warped => self.phase.scale_by(&self.mag01).expect("same shape"),
            InputMode::RawComplex => spec.bins.clone(),
        }
    }
}

/// Maps a complex tensor from normalised to raw scale: magnitude clamped to
/// `[0, 1]` and unwarped, phase kept. Zero maps to zero.
pub fn denormalize_complex(g: &mut Graph, z: CVar) -> Result<CVar> {
    let mag = g.cabs(z)?;
    let m = g.clamp(mag, 0.0, 1.0)?;
    let scaled = g.scale(m, (REF_DB - FLOOR_DB) / 20.0 * LN_10)?;
    let shifted = g.add_scalar(scaled, FLOOR_DB / 20.0 * LN_10)?;
    let e = g.exp(shifted)?;
    let raw = g.add_scalar(e, -MAG_EPS)?;
    let raw = g.clamp(raw, 0.0, f64::MAX)?;
    let ratio = g.safe_div(raw, mag)?;
    g.cscale_by(z, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(warp(1.0), 1.0);
        // The 1e-8 offset lifts −80 dB by 20·log10(1 + 1e-4) ≈ 8.7e-4 dB.
        let lift = 20.0 * (1.0f64 + 1e-4).log10() / 80.0;
        assert!((warp(1e-4) - lift).abs() < 1e-12);
        assert!(warp(1e-4) < 1.1e-5);
        assert_eq!(warp(0.0), 0.0);
        assert_eq!(warp(10.0), 1.0);
    }

    #[test]
    fn round_trip_away_from_clamp() {
        for i in 0..200 {
            let m = 2e-4 * (1.0f64 / 2e-4).powf(i as f64 / 199.0);
            let back = unwarp(warp(m));
            assert!((back - m).abs() / m < 1e-6, "{m} -> {back}");
        }
    }
}
