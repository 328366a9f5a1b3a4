//! RIFF WAV reading and writing.
//!
//! Reading accepts 16-bit integer and 32-bit float PCM, downmixes by
//! averaging channels and resamples to 16 kHz. Writing produces 16-bit PCM
//! (`round(x · 32768)`, clamped) or 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample::resample, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

pub fn wav_read(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported codec {fmt:?} with {bits} bits per sample",
                path.display()
            )))
        }
    };
    let channels = spec.channels as usize;
    if interleaved.is_empty() || channels == 0 {
        return Err(Error::Audio(format!("{}: no audio samples", path.display())));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.iter().any(|v| !v.is_finite()) {
        return Err(Error::Audio(format!("{}: non-finite samples", path.display())));
    }
    Ok(AudioClip::new(resample(&mono, spec.sample_rate, SAMPLE_RATE)))
}

pub fn wav_write(path: impl AsRef<Path>, clip: &AudioClip, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &x in &clip.samples {
        match format {
            WavFormat::Pcm16 => writer.write_sample((x * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16)?,
            WavFormat::Float32 => writer.write_sample(x as f32)?,
        }
    }
    writer.finalize()?;
    Ok(())
}
