//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc filter.
//!
//! The filter design follows the usual Octave `resample` recipe: stopband
//! edge at `1 / (2·max(p, q))`, transition width a tenth of that, 60 dB
//! rejection. Output length is `ceil(len · p / q)` and the filter is
//! centred so there is no group delay.

use std::f64::consts::PI;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order 0 (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn design_filter(p: usize, q: usize) -> Vec<f64> {
    let rejection_db: f64 = 60.0;
    let cutoff = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = cutoff / 10.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let denom = bessel_i0(beta);
    let h: Vec<f64> = (-half..=half)
        .map(|t| {
            let ratio = t as f64 / half as f64;
            let w = bessel_i0(beta * (1.0 - ratio * ratio).max(0.0).sqrt()) / denom;
            w * 2.0 * p as f64 * cutoff * sinc(2.0 * cutoff * t as f64)
        })
        .collect();
    // Unit DC gain after upsampling by p.
    let scale = p as f64 / h.iter().sum::<f64>();
    h.into_iter().map(|v| v * scale).collect()
}

/// Resamples `x` from `from_hz` to `to_hz`.
pub fn resample(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz || x.is_empty() {
        return x.to_vec();
    }
    let g = gcd(from_hz as usize, to_hz as usize);
    let (p, q) = (to_hz as usize / g, from_hz as usize / g);
    let h = design_filter(p, q);
    let half = (h.len() / 2) as i64;
    let out_len = (x.len() * p).div_ceil(q);
    let up_len = (x.len() * p) as i64;
    let mut y = Vec::with_capacity(out_len);
    for m in 0..out_len as i64 {
        // y[m] = Σ_k h[k] · x_up[m·q + half − k], x_up nonzero on multiples of p.
        let centre = m * q as i64 + half;
        let k_lo = (centre - up_len + 1).max(0);
        let k_hi = centre.min(h.len() as i64 - 1);
        let mut acc = 0.0;
        // First k ≥ k_lo with (centre − k) divisible by p.
        let mut k = k_lo + (centre - k_lo).rem_euclid(p as i64);
        while k <= k_hi {
            acc += h[k as usize] * x[((centre - k) / p as i64) as usize];
            k += p as i64;
        }
        y.push(acc);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }

    #[test]
    fn length_law_and_low_frequency_preservation() {
        let x: Vec<f64> = (0..48000).map(|n| (2.0 * PI * 440.0 * n as f64 / 48000.0).sin()).collect();
        let y = resample(&x, 48000, 16000);
        assert!((y.len() as i64 - 16000).abs() <= 1);
        let err = y[2000..14000]
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (2.0 * PI * 440.0 * (i + 2000) as f64 / 16000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
    }
}
