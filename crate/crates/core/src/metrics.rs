//! SI-SDR, STOI and SNR measurement.

use std::fmt::Write as _;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::autodiff::{Graph, Var};
use crate::dsp::resample::resample;
use crate::dsp::{power, AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// SI-SDR values are clamped to `±SI_SDR_CAP` dB.
pub const SI_SDR_CAP: f64 = 100.0;
/// Regulariser added to both energies in the loss.
pub const LOSS_DELTA: f64 = 1e-20;

fn check_pair(estimate: &[f64], reference: &[f64], op: &'static str) -> Result<()> {
    if estimate.len() != reference.len() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: Shape::signal(estimate.len()),
            rhs: Shape::signal(reference.len()),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to ±100.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(estimate, reference, "si_sdr")?;
    let ss = dot(reference, reference);
    if ss == 0.0 {
        return Err(Error::domain("si_sdr", "reference is silent"));
    }
    let alpha = dot(estimate, reference) / ss;
    let target = alpha * alpha * ss;
    let err: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(x, s)| (x - alpha * s).powi(2))
        .sum();
    if target == 0.0 {
        return Ok(-SI_SDR_CAP);
    }
    if err == 0.0 {
        return Ok(SI_SDR_CAP);
    }
    Ok((10.0 * (target / err).log10()).clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

pub fn si_sdr_clips(estimate: &AudioClip, reference: &AudioClip) -> Result<f64> {
    si_sdr(&estimate.samples, &reference.samples)
}

/// Negative SI-SDR of a `(1, 1, 1, L)` estimate against a fixed reference,
/// as a differentiable scalar. Energies are regularised by [`LOSS_DELTA`]
/// and the ratio clamped to the ±100 dB range.
pub fn neg_si_sdr_loss(g: &mut Graph, estimate: Var, reference: &[f64]) -> Result<Var> {
    let shape = g.shape(estimate);
    if shape != Shape::signal(reference.len()) {
        return Err(Error::ShapeMismatch {
            op: "neg_si_sdr_loss",
            lhs: shape,
            rhs: Shape::signal(reference.len()),
        });
    }
    let ss = dot(reference, reference);
    if ss == 0.0 {
        return Err(Error::domain("neg_si_sdr_loss", "reference is silent"));
    }
    let s = g.constant(Tensor::from_signal(reference)?);
    let xs = g.dot(estimate, s)?;
    let alpha = g.scale(xs, 1.0 / ss)?;
    let target = g.mul(s, alpha)?;
    let err = g.sub(estimate, target)?;
    let te = g.dot(target, target)?;
    let te = g.add_scalar(te, LOSS_DELTA)?;
    let ee = g.dot(err, err)?;
    let ee = g.add_scalar(ee, LOSS_DELTA)?;
    let ratio = g.div(te, ee)?;
    let cap = 10f64.powf(SI_SDR_CAP / 10.0);
    let ratio = g.clamp(ratio, 1.0 / cap, cap)?;
    let db = g.log10(ratio)?;
    g.scale(db, -10.0)
}

/// `10·log10(P_signal / P_noise)`.
pub fn measure_snr(signal: &[f64], noise: &[f64]) -> Result<f64> {
    let pv = power(noise);
    if pv <= 0.0 {
        return Err(Error::domain("measure_snr", "noise is silent"));
    }
    Ok(10.0 * (power(signal) / pv).log10())
}

// -------------------------------------------------------------------------
// STOI
// -------------------------------------------------------------------------

const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_NFFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_MIN_FREQ: f64 = 150.0;
/// Frames per intermediate-intelligibility segment (384 ms).
pub const STOI_SEGMENT: usize = 30;
const STOI_BETA_DB: f64 = -15.0;
const STOI_DYN_RANGE_DB: f64 = 40.0;

/// Symmetric Hann window without its zero endpoints.
fn hanning_inner(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// Drops frames of both signals where the reference is more than 40 dB
/// below its loudest frame and overlap-adds the rest.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = STOI_FRAME / 2;
    let w = hanning_inner(STOI_FRAME);
    if x.len() <= STOI_FRAME {
        return (Vec::new(), Vec::new());
    }
    let starts: Vec<usize> = (0..x.len() - STOI_FRAME).step_by(hop).collect();
    let frame = |s: &[f64], i: usize| -> Vec<f64> { w.iter().zip(&s[i..i + STOI_FRAME]).map(|(a, b)| a * b).collect() };
    let energy: Vec<f64> = starts
        .iter()
        .map(|&i| 20.0 * (dot(&frame(x, i), &frame(x, i)).sqrt() + f64::EPSILON).log10())
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - STOI_DYN_RANGE_DB - e < 0.0)
        .map(|(&i, _)| i)
        .collect();
    let ola = |s: &[f64]| -> Vec<f64> {
        if kept.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0.0; (kept.len() - 1) * hop + STOI_FRAME];
        for (j, &i) in kept.iter().enumerate() {
            for (o, v) in out[j * hop..].iter_mut().zip(frame(s, i)) {
                *o += v;
            }
        }
        out
    };
    (ola(x), ola(y))
}

/// Magnitude spectra `(frames, 257)` of 256-sample Hann frames zero-padded to 512.
fn stoi_stft(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Vec<f64>> {
    let hop = STOI_FRAME / 2;
    let w = hanning_inner(STOI_FRAME);
    let fft = planner.plan_fft_forward(STOI_NFFT);
    let mut out = Vec::new();
    let mut i = 0;
    while i + STOI_FRAME < x.len() {
        let mut buf = vec![Complex::new(0.0, 0.0); STOI_NFFT];
        for (k, b) in buf.iter_mut().take(STOI_FRAME).enumerate() {
            b.re = w[k] * x[i + k];
        }
        fft.process(&mut buf);
        out.push(buf[..STOI_NFFT / 2 + 1].iter().map(|c| c.norm_sqr()).collect());
        i += hop;
    }
    out
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = STOI_NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins)
        .map(|i| i as f64 * STOI_FS as f64 / STOI_NFFT as f64)
        .collect();
    let nearest = |target: f64| -> usize {
        (0..bins)
            .min_by(|&a, &b| (f[a] - target).powi(2).total_cmp(&(f[b] - target).powi(2)))
            .expect("bins")
    };
    (0..STOI_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = STOI_MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = STOI_MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes `[band][frame]`.
fn band_envelopes(power_spec: &[Vec<f64>], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    bands
        .iter()
        .map(|&(lo, hi)| power_spec.iter().map(|fr| fr[lo..hi].iter().sum::<f64>().sqrt()).collect())
        .collect()
}

fn normalize_row(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let n = dot(v, v).sqrt() + f64::EPSILON;
    v.iter_mut().for_each(|x| *x /= n);
}

/// Short-time objective intelligibility of `estimate` against `reference`,
/// both at 16 kHz. Errors if fewer than 30 non-silent frames remain.
pub fn stoi(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(estimate, reference, "stoi")?;
    let x = resample(reference, SAMPLE_RATE, STOI_FS);
    let y = resample(estimate, SAMPLE_RATE, STOI_FS);
    let (x, y) = remove_silent_frames(&x, &y);
    let mut planner = FftPlanner::new();
    let bands = third_octave_bands();
    let xb = band_envelopes(&stoi_stft(&x, &mut planner), &bands);
    let yb = band_envelopes(&stoi_stft(&y, &mut planner), &bands);
    let frames = xb[0].len();
    if frames < STOI_SEGMENT {
        return Err(Error::Audio(format!(
            "STOI needs at least {STOI_SEGMENT} non-silent frames, got {frames}"
        )));
    }
    let clip = 10f64.powf(-STOI_BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - STOI_SEGMENT + 1;
    for m in STOI_SEGMENT..=frames {
        for (xr, yr) in xb.iter().zip(&yb) {
            let mut xs = xr[m - STOI_SEGMENT..m].to_vec();
            let ys = &yr[m - STOI_SEGMENT..m];
            let scale = dot(&xs, &xs).sqrt() / (dot(ys, ys).sqrt() + f64::EPSILON);
            let mut yp: Vec<f64> = ys
                .iter()
                .zip(&xs)
                .map(|(y, x)| (y * scale).min(x * (1.0 + clip)))
                .collect();
            normalize_row(&mut xs);
            normalize_row(&mut yp);
            total += dot(&xs, &yp);
        }
    }
    Ok(total / (segments * STOI_BANDS) as f64)
}

pub fn stoi_clips(estimate: &AudioClip, reference: &AudioClip) -> Result<f64> {
    stoi(&estimate.samples, &reference.samples)
}

// -------------------------------------------------------------------------
// Reports
// -------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ClipMetrics {
    pub clip_id: String,
    /// Nominal mixing SNR the clip was generated at.
    pub snr_bucket: f64,
    /// Measured input SNR.
    pub snr_db: f64,
    pub si_sdr: f64,
    pub stoi: f64,
}

impl ClipMetrics {
    fn is_finite(&self) -> bool {
        self.si_sdr.is_finite() && self.stoi.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub clips: usize,
    pub excluded: usize,
    pub si_sdr: f64,
    pub stoi: f64,
    pub snr_db: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub label: String,
    pub clips: Vec<ClipMetrics>,
}

impl MetricReport {
    pub fn new(label: impl Into<String>) -> Self {
        MetricReport {
            label: label.into(),
            clips: Vec::new(),
        }
    }

    /// Means over clips with finite metrics, optionally restricted to a bucket.
    pub fn aggregate(&self, bucket: Option<f64>) -> Aggregate {
        let sel: Vec<&ClipMetrics> = self
            .clips
            .iter()
            .filter(|c| bucket.is_none_or(|b| c.snr_bucket == b))
            .collect();
        let ok: Vec<&&ClipMetrics> = sel.iter().filter(|c| c.is_finite()).collect();
        let n = ok.len();
        let mean = |f: fn(&ClipMetrics) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                ok.iter().map(|c| f(c)).sum::<f64>() / n as f64
            }
        };
        Aggregate {
            clips: n,
            excluded: sel.len() - n,
            si_sdr: mean(|c| c.si_sdr),
            stoi: mean(|c| c.stoi),
            snr_db: mean(|c| c.snr_db),
        }
    }

    /// Distinct buckets in first-seen order.
    pub fn buckets(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for c in &self.clips {
            if !out.contains(&c.snr_bucket) {
                out.push(c.snr_bucket);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.clips {
            let _ = writeln!(
                s,
                "{} clip={} snr_bucket={} snr_db={:.3} si_sdr={:.3} stoi={:.4}",
                self.label, c.clip_id, c.snr_bucket, c.snr_db, c.si_sdr, c.stoi
            );
        }
        let a = self.aggregate(None);
        let _ = writeln!(
            s,
            "{} mean clips={} excluded={} si_sdr={:.3} stoi={:.4}",
            self.label, a.clips, a.excluded, a.si_sdr, a.stoi
        );
        s
    }

    /// Comma-separated `clip_id,snr_bucket,si_sdr,stoi`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("clip_id,snr_bucket,si_sdr,stoi\n");
        for c in &self.clips {
            let _ = writeln!(s, "{},{},{},{}", c.clip_id, c.snr_bucket, c.si_sdr, c.stoi);
        }
        s
    }
}

/// SNR-bucketed side-by-side table of several reports (e.g. noisy baseline
/// and model).
pub fn bucket_table(reports: &[&MetricReport]) -> String {
    let mut buckets: Vec<f64> = Vec::new();
    for r in reports {
        for b in r.buckets() {
            if !buckets.contains(&b) {
                buckets.push(b);
            }
        }
    }
    let mut s = format!("{:<10} {:<8}", "system", "metric");
    for b in &buckets {
        let _ = write!(s, " {:>9}", format!("{b} dB"));
    }
    s.push('\n');
    for r in reports {
        for (metric, pick) in [("stoi", 0), ("si_sdr", 1)] {
            let _ = write!(s, "{:<10} {:<8}", r.label, metric);
            for &b in &buckets {
                let a = r.aggregate(Some(b));
                let v = if pick == 0 { a.stoi } else { a.si_sdr };
                let _ = write!(s, " {v:>9.3}");
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_octave_bands_are_increasing() {
        let b = third_octave_bands();
        assert_eq!(b.len(), 15);
        assert_eq!(b[0], (7, 9));
        assert!(b.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn si_sdr_sentinels() {
        let x = [1.0, -2.0, 3.0];
        assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP);
        assert_eq!(si_sdr(&[0.0; 3], &x).unwrap(), -SI_SDR_CAP);
        assert!(si_sdr(&x, &[0.0; 3]).is_err());
        assert!(si_sdr(&x, &[1.0]).is_err());
    }

    #[test]
    fn snr_shift_for_half_gain() {
        let s = [1.0, -1.0, 1.0, -1.0];
        let v = [1.0, 1.0, -1.0, -1.0];
        assert!(measure_snr(&s, &v).unwrap().abs() < 1e-12);
        let half: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
        assert!((measure_snr(&s, &half).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!(measure_snr(&s, &[0.0; 4]).is_err());
    }
}
