mod common;

use common::{fixture, lcg, voiced};
use hybridse::autodiff::Graph;
use hybridse::dsp::mix::make_pair_at;
use hybridse::dsp::stft::{signal_len, stft_samples};
use hybridse::dsp::synth::synthetic_pools;
use hybridse::metrics::{
    bucket_table, measure_snr, neg_si_sdr_loss, si_sdr, stoi, ClipMetrics, MetricReport, SI_SDR_CAP,
};
use hybridse::pipeline::EVAL_SNRS_DB;
use hybridse::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn si_sdr_is_scale_invariant(seed in 0u64..1000, log_alpha in -3.0f64..3.0) {
        let s = lcg(seed, 2000);
        let e: Vec<f64> = s.iter().zip(lcg(seed + 1, 2000)).map(|(a, b)| a + 0.3 * b).collect();
        let alpha = 10f64.powf(log_alpha);
        let scaled: Vec<f64> = e.iter().map(|v| alpha * v).collect();
        prop_assert!((si_sdr(&scaled, &s).unwrap() - si_sdr(&e, &s).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_noise_si_sdr_equals_snr(seed in 0u64..1000, snr in -10.0f64..30.0) {
        let s = lcg(seed, 4000);
        let w = lcg(seed + 99, 4000);
        let c = dot(&w, &s) / dot(&s, &s);
        let v: Vec<f64> = w.iter().zip(&s).map(|(w, s)| w - c * s).collect();
        let g = (dot(&s, &s) / (dot(&v, &v) * 10f64.powf(snr / 10.0))).sqrt();
        let est: Vec<f64> = s.iter().zip(&v).map(|(s, v)| s + g * v).collect();
        prop_assert!((si_sdr(&est, &s).unwrap() - snr).abs() < 1e-9);
        let noise: Vec<f64> = v.iter().map(|v| g * v).collect();
        prop_assert!((measure_snr(&s, &noise).unwrap() - snr).abs() < 1e-9);
    }
}

#[test]
fn si_sdr_sentinels_and_errors() {
    let s = lcg(1, 100);
    assert_eq!(si_sdr(&s, &s).unwrap(), SI_SDR_CAP);
    let orth = vec![0.0; 100];
    assert_eq!(si_sdr(&orth, &s).unwrap(), -SI_SDR_CAP);
    assert!(si_sdr(&s[..99], &s).is_err());
    assert!(si_sdr(&s, &vec![0.0; 100]).is_err());
}

#[test]
fn stoi_matches_pystoi() {
    let fx = fixture("stoi.json");
    let n = fx["len"].as_u64().unwrap() as usize;
    let x = voiced(n);
    let v = lcg(fx["noise_seed"].as_u64().unwrap(), n);
    for case in fx["cases"].as_array().unwrap() {
        let a = case["noise_gain"].as_f64().unwrap();
        let want = case["stoi"].as_f64().unwrap();
        let y: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + a * v).collect();
        let got = stoi(&y, &x).unwrap();
        assert!((got - want).abs() < 1e-6, "gain {a}: {got} vs {want}");
    }
}

#[test]
fn stoi_self_identity() {
    let (sp, np) = synthetic_pools(0, 4, 2);
    for seed in 0..3 {
        let pair = make_pair_at(&sp, &np, seed, Some(0.0)).unwrap();
        assert!(stoi(&pair.clean.samples, &pair.clean.samples).unwrap() >= 0.999);
    }
}

#[test]
fn stoi_rejects_short_input() {
    let x = lcg(3, 4000);
    assert!(stoi(&x, &x).is_err());
    assert!(stoi(&x[..3999], &x).is_err());
}

#[test]
fn stoi_is_monotone_over_snr_sweep() {
    let (sp, np) = synthetic_pools(1, 8, 4);
    for seed in 0..20 {
        let scores: Vec<f64> = EVAL_SNRS_DB
            .iter()
            .map(|&snr| {
                let p = make_pair_at(&sp, &np, 500 + seed, Some(snr)).unwrap();
                stoi(&p.noisy.samples, &p.clean.samples).unwrap()
            })
            .collect();
        assert!(scores.windows(2).all(|w| w[0] < w[1]), "seed {seed}: {scores:?}");
    }
}

fn bump(t: &Tensor, k: usize, d: f64) -> Tensor {
    let mut v = t.data().to_vec();
    v[k] += d;
    Tensor::new(t.shape(), v).unwrap()
}

#[test]
fn loss_gradient_through_istft() {
    // 0.5 s of noise-corrupted tone; parameters are the STFT bins.
    let len = 8000;
    let reference = voiced(len + 4000)[4000..].to_vec();
    let noisy: Vec<f64> = reference.iter().zip(lcg(4, len)).map(|(s, v)| s + 0.2 * v).collect();
    let z = stft_samples(&noisy).unwrap();
    let covered = signal_len(z.shape().0[3]);
    let target = &reference[..covered];

    let loss = |re: &Tensor, im: &Tensor| -> f64 {
        let mut g = Graph::new();
        let (r, i) = (g.constant(re.clone()), g.constant(im.clone()));
        let y = g.istft(r, i).unwrap();
        let l = neg_si_sdr_loss(&mut g, y, target).unwrap();
        g.value(l).item()
    };
    let mut g = Graph::new();
    let (r, i) = (g.param(z.re.clone()), g.param(z.im.clone()));
    let y = g.istft(r, i).unwrap();
    let l = neg_si_sdr_loss(&mut g, y, target).unwrap();
    let grads = g.backward(l).unwrap();
    let (gr, gi) = (grads.get(r).unwrap(), grads.get(i).unwrap());

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let eps = 1e-6;
    let mut checked = 0;
    for _ in 0..300 {
        let k = rng.gen_range(0..z.re.numel());
        let imag = rng.gen_bool(0.5);
        let (base, analytic) = if imag { (&z.im, gi.data()[k]) } else { (&z.re, gr.data()[k]) };
        let (hi, lo) = (bump(base, k, eps), bump(base, k, -eps));
        let numeric = if imag {
            (loss(&z.re, &hi) - loss(&z.re, &lo)) / (2.0 * eps)
        } else {
            (loss(&hi, &z.im) - loss(&lo, &z.im)) / (2.0 * eps)
        };
        let scale = numeric.abs().max(analytic.abs());
        if scale < 1e-4 {
            assert!((numeric - analytic).abs() < 1e-7, "coord {k}: {analytic} vs {numeric}");
        } else {
            assert!((numeric - analytic).abs() / scale < 1e-4, "coord {k}: {analytic} vs {numeric}");
            checked += 1;
        }
    }
    assert!(checked > 50);
}

#[test]
fn report_aggregation_and_csv() {
    let clip = |id: &str, bucket: f64, sdr: f64, st: f64| ClipMetrics {
        clip_id: id.into(),
        snr_bucket: bucket,
        snr_db: bucket,
        si_sdr: sdr,
        stoi: st,
    };
    let mut rep = MetricReport::new("m");
    rep.clips = vec![clip("a", 0.0, 2.0, 0.5), clip("b", 0.0, 4.0, 0.7), clip("c", 10.0, f64::NAN, 0.9)];
    let all = rep.aggregate(None);
    assert_eq!((all.clips, all.excluded), (2, 1));
    assert!((all.si_sdr - 3.0).abs() < 1e-12);
    let b0 = rep.aggregate(Some(0.0));
    assert!((b0.stoi - 0.6).abs() < 1e-12);
    assert_eq!(rep.buckets(), [0.0, 10.0]);
    let csv = rep.to_csv();
    assert!(csv.starts_with("clip_id,snr_bucket,si_sdr,stoi\n"));
    assert_eq!(csv.lines().count(), 4);
    let table = bucket_table(&[&rep]);
    assert!(table.contains('m'));
}
