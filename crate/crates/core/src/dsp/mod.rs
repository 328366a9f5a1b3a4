//! Audio ingestion, time-frequency transforms and training-data synthesis.

pub mod manifest;
pub mod mix;
pub mod norm;
pub mod resample;
pub mod stft;
pub mod synth;
pub mod wav;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Self {
        AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power `Σx² / n`.
    pub fn power(&self) -> f64 {
        power(&self.samples)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::Audio(format!("expected {SAMPLE_RATE} Hz, got {}", self.sample_rate)));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Audio("clip contains non-finite samples".into()));
        }
        Ok(())
    }
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
