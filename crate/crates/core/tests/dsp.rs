mod common;

use common::{fixture, floats, lcg};
use hybridse::dsp::manifest::Manifest;
use hybridse::dsp::mix::{apply_fade, make_pair_at, make_training_pair, mix_at_snr, PAIR_LEN, SNR_RANGE_DB};
use hybridse::dsp::norm::{denormalize, normalize, unwarp, warp};
use hybridse::dsp::resample::resample;
use hybridse::dsp::stft::{
    frame_count, istft, signal_len, spectral_energy, stft, stft_samples, weighted_energy, Spectrogram, BINS, EDGE_TRIM,
};
use hybridse::dsp::synth::synthetic_pools;
use hybridse::dsp::wav::{wav_read, wav_write, WavFormat};
use hybridse::dsp::{power, AudioClip};
use hybridse::{ComplexTensor, Shape, Tensor};
use proptest::prelude::*;

#[test]
fn stft_matches_numpy() {
    let fx = fixture("stft.json");
    let x = lcg(fx["seed"].as_u64().unwrap(), fx["len"].as_u64().unwrap() as usize);
    let z = stft_samples(&x).unwrap();
    let frames = frame_count(x.len()).unwrap();
    assert_eq!(z.shape(), Shape::new(1, 1, BINS, frames));
    let re = Tensor::new(z.shape(), floats(&fx["re"])).unwrap();
    let im = Tensor::new(z.shape(), floats(&fx["im"])).unwrap();
    assert!(z.re.max_abs_diff(&re) < 1e-12);
    assert!(z.im.max_abs_diff(&im) < 1e-12);
}

#[test]
fn ten_second_clip_frames() {
    assert_eq!(frame_count(160_000), Some(1249));
    assert_eq!(signal_len(1249), 160_000);
    assert_eq!(frame_count(255), None);
}

#[test]
fn stft_round_trip_interior() {
    for seed in 0..5 {
        let x = lcg(seed, 16_000);
        let y = istft(&stft(&AudioClip::new(x.clone())).unwrap()).unwrap();
        assert_eq!(y.len(), signal_len(frame_count(x.len()).unwrap()));
        let worst = (EDGE_TRIM..y.len() - EDGE_TRIM).map(|i| (y.samples[i] - x[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "seed {seed}: interior error {worst}");
    }
}

#[test]
fn parseval() {
    for seed in 0..5 {
        let x = lcg(100 + seed, 8_000);
        let z = stft_samples(&x).unwrap();
        let (t, s) = (weighted_energy(&x).unwrap(), spectral_energy(&z));
        assert!((t - s).abs() / t < 0.01, "{t} vs {s}");
    }
}

#[test]
fn normalize_endpoints() {
    let spec = |m: f64| {
        let re = Tensor::full(Shape::new(1, 1, BINS, 1), m);
        Spectrogram::new(ComplexTensor::new(re, Tensor::zeros(Shape::new(1, 1, BINS, 1))).unwrap()).unwrap()
    };
    let one = normalize(&spec(1.0));
    assert!(one.mag01.data().iter().all(|&v| v == 1.0));
    // −80 dB sits 20·log10(1 + 1e-4)/80 above zero because of the 1e-8 offset.
    let low = normalize(&spec(1e-4));
    assert!(low.mag01.data().iter().all(|&v| (0.0..1.1e-5).contains(&v)));
    let zero = normalize(&spec(0.0));
    assert!(zero.mag01.data().iter().all(|&v| v == 0.0));
    assert!(zero.phase.re.data().iter().all(|&v| v == 0.0));
}

#[test]
fn normalize_round_trip() {
    let x = lcg(9, 4096);
    let s = stft(&AudioClip::new(x)).unwrap();
    let back = denormalize(&normalize(&s)).unwrap();
    let (m0, m1) = (s.bins.abs(), back.bins.abs());
    for (a, b) in m0.data().iter().zip(m1.data()) {
        if (2e-4..=1.0).contains(a) {
            assert!((a - b).abs() / a < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn warp_is_monotone_and_clamped(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(warp(lo) <= warp(hi));
        prop_assert!((0.0..=1.0).contains(&warp(a)));
        // Clamp is idempotent: re-warping an unwarped value is stable.
        let m = warp(a);
        prop_assert!((warp(unwarp(m)) - m).abs() < 1e-9);
    }

    #[test]
    fn mix_realizes_snr(seed in 0u64..1000, snr in -5.0f64..20.0) {
        let s = AudioClip::new(lcg(seed, 4000));
        let v = AudioClip::new(lcg(seed + 7919, 4000));
        let m = mix_at_snr(&s, &v, snr).unwrap();
        let noise: Vec<f64> = m.noisy.samples.iter().zip(&s.samples).map(|(y, x)| y - x).collect();
        let realized = 10.0 * (power(&s.samples) / power(&noise)).log10();
        prop_assert!((realized - snr).abs() < 1e-9);
    }
}

#[test]
fn mix_rejects_silent_noise_and_length_mismatch() {
    let s = AudioClip::new(lcg(1, 100));
    assert!(mix_at_snr(&s, &AudioClip::new(vec![0.0; 100]), 0.0).is_err());
    assert!(mix_at_snr(&s, &AudioClip::new(lcg(2, 99)), 0.0).is_err());
}

#[test]
fn fade_endpoints() {
    let clip = AudioClip::new(vec![1.0; 16_000]);
    let out = apply_fade(&clip, 0.25).unwrap();
    let n = 4000;
    assert_eq!(out.samples[0], 0.0);
    assert_eq!(out.samples[out.len() - 1], 0.0);
    assert_eq!(out.samples[n], 1.0);
    assert_eq!(out.samples[out.len() - 1 - n], 1.0);
    assert!((out.samples[n / 2] - 0.5).abs() < 1e-12);
    for i in 1..n {
        assert!(out.samples[i] >= out.samples[i - 1]);
    }
    assert!(apply_fade(&clip, 0.1).is_err());
    assert!(apply_fade(&AudioClip::new(vec![1.0; 8000]), 0.3).is_err());
}

#[test]
fn resample_matches_reference() {
    let fx = fixture("resample.json");
    let x = lcg(fx["seed"].as_u64().unwrap(), fx["len"].as_u64().unwrap() as usize);
    let want = floats(&fx["output"]);
    let got = resample(&x, 16_000, 10_000);
    assert_eq!(got.len(), want.len());
    let worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "max abs diff {worst}");
}

#[test]
fn resample_preserves_low_tone() {
    let x: Vec<f64> = (0..8000).map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin()).collect();
    let y = resample(&x, 8000, 16_000);
    assert_eq!(y.len(), 16_000);
    for n in 2000..14_000 {
        let want = (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16_000.0).sin();
        assert!((y[n] - want).abs() < 1e-2, "n={n}");
    }
}

#[test]
fn wav_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = lcg(5, 1600).iter().map(|v| v * 1.5).collect();
    let clip = AudioClip::new(x.clone());
    let f = dir.path().join("f.wav");
    wav_write(&f, &clip, WavFormat::Float32).unwrap();
    let back = wav_read(&f).unwrap();
    assert_eq!(back.len(), x.len());
    assert!(back.samples.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-6));
    let p = dir.path().join("p.wav");
    wav_write(&p, &clip, WavFormat::Pcm16).unwrap();
    let back = wav_read(&p).unwrap();
    assert!(back.samples.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1.0 / 32768.0));
}

#[test]
fn wav_read_resamples_to_16k() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("8k.wav");
    let mut clip = AudioClip::new(vec![0.1; 8000]);
    clip.sample_rate = 8000;
    wav_write(&path, &clip, WavFormat::Float32).unwrap();
    let back = wav_read(&path).unwrap();
    assert_eq!(back.sample_rate, 16_000);
    assert_eq!(back.len(), 16_000);
}

#[test]
fn manifest_parsing() {
    let base = std::path::Path::new("/data");
    let m = Manifest::parse("[speech]\na.wav\n# comment\n[noise]\nb.wav\n", base).unwrap();
    assert_eq!(m.speech, [base.join("a.wav")]);
    assert_eq!(m.noise, [base.join("b.wav")]);
    let m = Manifest::parse("[synthetic]\nseed = 3\nspeech_clips = 4\nnoise_clips = 2\n", base).unwrap();
    let s = m.synthetic.unwrap();
    assert_eq!((s.seed, s.speech_clips, s.noise_clips), (3, 4, 2));
    assert!(Manifest::parse("[speech]\na.wav\n", base).is_err());
    assert!(Manifest::parse("[music]\na.wav\n", base).is_err());
    assert!(Manifest::parse("a.wav\n", base).is_err());
    assert!(Manifest::parse("[synthetic]\nfoo = 1\n", base).is_err());
}

#[test]
fn training_pairs_are_deterministic() {
    let (sp, np) = synthetic_pools(0, 4, 2);
    let a = make_training_pair(&sp, &np, 42).unwrap();
    let b = make_training_pair(&sp, &np, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.noisy.len(), PAIR_LEN);
    assert!((SNR_RANGE_DB.0..=SNR_RANGE_DB.1).contains(&a.snr_db));
    let c = make_pair_at(&sp, &np, 43, Some(5.0)).unwrap();
    assert_ne!(a.clean, c.clean);
    let noise: Vec<f64> = c.noisy.samples.iter().zip(&c.clean.samples).map(|(y, s)| y - s).collect();
    let snr = 10.0 * (power(&c.clean.samples) / power(&noise)).log10();
    assert!((snr - 5.0).abs() < 1e-9);
}
