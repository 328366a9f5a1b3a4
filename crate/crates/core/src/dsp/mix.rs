//! SNR mixing, raised-cosine fades and training-pair synthesis.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const PAIR_SECONDS: usize = 10;
pub const PAIR_LEN: usize = PAIR_SECONDS * SAMPLE_RATE as usize;
pub const SNR_RANGE_DB: (f64, f64) = (-5.0, 20.0);
pub const FADE_RANGE_S: (f64, f64) = (0.2, 0.3);

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub noisy: AudioClip,
    /// Gain applied to the noise.
    pub gain: f64,
}

/// `y = s + g·v` with `g = sqrt(P_s / (P_v · 10^(snr/10)))`.
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<Mixture> {
    if speech.len() != noise.len() {
        return Err(Error::Audio(format!(
            "speech ({}) and noise ({}) lengths differ",
            speech.len(),
            noise.len()
        )));
    }
    let pv = noise.power();
    if pv <= 0.0 {
        return Err(Error::Audio("noise is silent".into()));
    }
    let gain = (speech.power() / (pv * 10f64.powf(snr_db / 10.0))).sqrt();
    let noisy = speech
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(s, v)| s + gain * v)
        .collect();
    Ok(Mixture {
        noisy: AudioClip::new(noisy),
        gain,
    })
}

/// Raised-cosine fade-in and fade-out of `round(dur_s · 16000)` samples.
pub fn apply_fade(clip: &AudioClip, dur_s: f64) -> Result<AudioClip> {
    if !(FADE_RANGE_S.0..=FADE_RANGE_S.1).contains(&dur_s) {
        return Err(Error::Audio(format!(
            "fade duration {dur_s} s outside [{}, {}]",
            FADE_RANGE_S.0, FADE_RANGE_S.1
        )));
    }
    let n = (dur_s * clip.sample_rate as f64).round() as usize;
    if 2 * n >= clip.len() {
        return Err(Error::Audio(format!(
            "clip of {} samples too short for two {n}-sample fades",
            clip.len()
        )));
    }
    let mut out = clip.clone();
    let len = out.len();
    for i in 0..n {
        let w = 0.5 - 0.5 * (PI * i as f64 / n as f64).cos();
        out.samples[i] *= w;
        out.samples[len - 1 - i] *= w;
    }
    Ok(out)
}

/// A pool of source clips to draw from.
#[derive(Clone, Debug, Default)]
pub struct ClipPool {
    pub clips: Vec<AudioClip>,
}

impl ClipPool {
    pub fn new(clips: Vec<AudioClip>) -> Self {
        ClipPool { clips }
    }

    pub fn total_samples(&self) -> usize {
        self.clips.iter().map(AudioClip::len).sum()
    }

    /// Concatenates randomly drawn, individually faded clips up to `len`
    /// samples. Clips too short to fade are used unfaded.
    fn draw_concat(&self, rng: &mut ChaCha8Rng, len: usize, what: &str) -> Result<AudioClip> {
        if self.clips.is_empty() || self.total_samples() < len {
            return Err(Error::Audio(format!(
                "{what} sources hold {} samples, need at least {len}",
                self.total_samples()
            )));
        }
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let clip = &self.clips[rng.gen_range(0..self.clips.len())];
            let dur = rng.gen_range(FADE_RANGE_S.0..=FADE_RANGE_S.1);
            let faded = apply_fade(clip, dur).unwrap_or_else(|_| clip.clone());
            out.extend_from_slice(&faded.samples);
        }
        out.truncate(len);
        Ok(AudioClip::new(out))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub noisy: AudioClip,
    pub clean: AudioClip,
    pub snr_db: f64,
}

/// A deterministic 10 s (noisy, clean) pair at an SNR drawn from
/// U[-5, 20] dB.
pub fn make_training_pair(speech: &ClipPool, noise: &ClipPool, seed: u64) -> Result<TrainingPair> {
    make_pair_at(speech, noise, seed, None)
}

/// As [`make_training_pair`] with an optional fixed SNR.
pub fn make_pair_at(speech: &ClipPool, noise: &ClipPool, seed: u64, snr_db: Option<f64>) -> Result<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = speech.draw_concat(&mut rng, PAIR_LEN, "speech")?;
    let noise_clip = noise.draw_concat(&mut rng, PAIR_LEN, "noise")?;
    let drawn = rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
    let snr_db = snr_db.unwrap_or(drawn);
    let mix = mix_at_snr(&clean, &noise_clip, snr_db)?;
    Ok(TrainingPair {
        noisy: mix.noisy,
        clean,
        snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fade_shape() {
        let clip = AudioClip::new(vec![1.0; 16000]);
        let f = apply_fade(&clip, 0.25).unwrap();
        assert_eq!(f.samples[0], 0.0);
        assert_eq!(f.samples[8000], 1.0);
        assert!((f.samples[2000] - 0.5).abs() < 1e-15);
        assert_eq!(f.samples[4000], 1.0);
        assert!(f.samples[3999] < 1.0);
        assert!(apply_fade(&AudioClip::new(vec![1.0; 8000]), 0.25).is_err());
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_gain() {
        let s = AudioClip::new(vec![1.0, -1.0, 1.0, -1.0]);
        let v = AudioClip::new(vec![-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(mix_at_snr(&s, &v, 0.0).unwrap().gain, 1.0);
        assert_eq!(mix_at_snr(&s, &v, f64::INFINITY).unwrap().gain, 0.0);
        assert!(mix_at_snr(&s, &AudioClip::new(vec![0.0; 4]), 0.0).is_err());
    }
}
