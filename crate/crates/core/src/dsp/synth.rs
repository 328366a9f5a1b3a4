//! Seeded synthetic stand-ins for speech and noise corpora.
//!
//! Synthetic speech is a sequence of voiced syllables separated by short
//! pauses. Each syllable is a harmonic series on a gliding fundamental,
//! shaped by two formant resonances and a Hann envelope. Synthetic noise is
//! coloured Gaussian noise with a random spectral tilt and slow amplitude
//! modulation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mix::ClipPool, AudioClip, SAMPLE_RATE};

const FS: f64 = SAMPLE_RATE as f64;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// One speech-like utterance of roughly `seconds` duration.
pub fn speech_utterance(seed: u64, seconds: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (seconds * FS) as usize;
    let mut out = vec![0.0; total];
    let base_f0: f64 = rng.gen_range(90.0..220.0);
    let mut pos = (rng.gen_range(0.05..0.15) * FS) as usize;
    while pos < total {
        let syl = (rng.gen_range(0.12..0.32) * FS) as usize;
        let end = (pos + syl).min(total);
        let f0_start = base_f0 * rng.gen_range(0.85..1.2);
        let f0_end = base_f0 * rng.gen_range(0.8..1.15);
        let formants = [rng.gen_range(300.0..900.0), rng.gen_range(900.0..2600.0)];
        let bandwidths = [rng.gen_range(80.0..160.0), rng.gen_range(120.0..250.0)];
        let level: f64 = rng.gen_range(0.4..1.0);
        let mut phase = 0.0;
        let n = end - pos;
        for i in 0..n {
            let frac = i as f64 / n as f64;
            let f0 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * PI * f0 / FS;
            let env = 0.5 - 0.5 * (2.0 * PI * frac).cos();
            let mut v = 0.0;
            let mut h = 1.0;
            while h * f0 < 4000.0 {
                let f = h * f0;
                let gain: f64 = formants
                    .iter()
                    .zip(&bandwidths)
                    .map(|(fc, bw)| (-((f - fc) / bw).powi(2)).exp())
                    .sum::<f64>()
                    + 0.05 / h;
                v += gain * (h * phase).sin();
                h += 1.0;
            }
            out[pos + i] = 0.1 * level * env * v;
        }
        pos = end + (rng.gen_range(0.04..0.25) * FS) as usize;
    }
    AudioClip::new(out)
}

/// A stationary-ish noise clip.
pub fn noise_clip(seed: u64, seconds: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = (seconds * FS) as usize;
    let pole: f64 = rng.gen_range(0.0..0.95);
    let mod_rate: f64 = rng.gen_range(0.1..2.0);
    let mod_depth: f64 = rng.gen_range(0.0..0.5);
    let mut state = 0.0;
    let samples = (0..total)
        .map(|i| {
            state = pole * state + (1.0 - pole) * gaussian(&mut rng);
            let m = 1.0 + mod_depth * (2.0 * PI * mod_rate * i as f64 / FS).sin();
            0.05 * m * state / (1.0 - pole).max(0.05).sqrt()
        })
        .collect();
    AudioClip::new(samples)
}

/// White Gaussian noise.
pub fn white_noise(seed: u64, len: usize, std: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioClip::new((0..len).map(|_| std * gaussian(&mut rng)).collect())
}

/// Pools of synthetic speech utterances (2–4 s) and 10 s noise clips.
pub fn synthetic_pools(seed: u64, speech_clips: usize, noise_clips: usize) -> (ClipPool, ClipPool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speech = (0..speech_clips)
        .map(|_| speech_utterance(rng.gen(), rng.gen_range(2.0..4.0)))
        .collect();
    let noise = (0..noise_clips).map(|_| noise_clip(rng.gen(), 10.0)).collect();
    (ClipPool::new(speech), ClipPool::new(noise))
}
