mod common;

use common::TOY_HCDAE;
use hybridse::arch::{Model, ModelSpec};
use hybridse::checkpoint::{Checkpoint, TrainState};
use hybridse::dsp::mix::{make_pair_at, TrainingPair};
use hybridse::dsp::synth::synthetic_pools;
use hybridse::dsp::AudioClip;
use hybridse::train::{
    adam_step, example_gradients, lr_at, read_history, train, RunDir, TrainConfig, ADAM_EPS, BETA1, BETA2,
};
use hybridse::{Error, Shape, Tensor};

fn toy(seed: u64) -> Model {
    Model::build(&ModelSpec::from_toml(TOY_HCDAE).unwrap(), seed).unwrap()
}

/// Two-second pairs cut from the synthetic pools.
fn short_pairs(n: u64) -> Vec<TrainingPair> {
    let (sp, np) = synthetic_pools(2, 6, 2);
    (0..n)
        .map(|s| {
            let p = make_pair_at(&sp, &np, 100 + s, None).unwrap();
            let cut = |c: &AudioClip| AudioClip::new(c.samples[..32000].to_vec());
            TrainingPair {
                noisy: cut(&p.noisy),
                clean: cut(&p.clean),
                snr_db: p.snr_db,
            }
        })
        .collect()
}

fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr_init: 1e-3,
        lr_final: 1e-4,
        batch_size: 2,
        steps_per_epoch: 2,
        crop_frames: Some(24),
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn lr_schedule_is_geometric() {
    let cfg = TrainConfig::default();
    assert!((lr_at(&cfg, 0).unwrap() - 1e-3).abs() < 1e-18);
    assert!((lr_at(&cfg, 99).unwrap() - 1e-4).abs() < 1e-15);
    let ratio = lr_at(&cfg, 1).unwrap() / lr_at(&cfg, 0).unwrap();
    assert!((ratio - 0.1f64.powf(1.0 / 99.0)).abs() < 1e-12);
    for e in 1..99 {
        let r = lr_at(&cfg, e + 1).unwrap() / lr_at(&cfg, e).unwrap();
        assert!((r - ratio).abs() < 1e-12);
    }
    assert!(lr_at(&cfg, 100).is_err());
    let one = TrainConfig { epochs: 1, ..cfg };
    assert_eq!(lr_at(&one, 0).unwrap(), one.lr_init);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    for bad in [
        TrainConfig { epochs: 0, ..ok.clone() },
        TrainConfig { lr_final: 1e-2, ..ok.clone() },
        TrainConfig { lr_init: 0.0, ..ok.clone() },
        TrainConfig { weight_decay: -1.0, ..ok.clone() },
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { crop_frames: Some(3), ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Training(_))), "{bad:?}");
    }
    let mut model = toy(0);
    let st = TrainState::zeros(&model);
    let cfg = TrainConfig { epochs: 0, ..quick_cfg(1) };
    assert!(train(&mut model, &short_pairs(1), &[], &cfg, st, None).is_err());
}

/// Scalar Adam with decoupled decay, written out directly.
fn reference_adam(p0: f64, grads: &[f64], lr: f64, wd: f64) -> f64 {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        m = BETA1 * m + (1.0 - BETA1) * g;
        v = BETA2 * v + (1.0 - BETA2) * g * g;
        let mh = m / (1.0 - BETA1.powi(t));
        let vh = v / (1.0 - BETA2.powi(t));
        p -= lr * (mh / (vh.sqrt() + ADAM_EPS) + wd * p);
    }
    p
}

fn adam_state(n: usize) -> TrainState {
    let z = Tensor::zeros(Shape::new(1, 1, 1, 1));
    TrainState {
        epoch: 0,
        step: 0,
        m: vec![z.clone(); n],
        v: vec![z; n],
    }
}

#[test]
fn adam_matches_scalar_reference() {
    let grads = [0.3, -1.2, 0.05, 2.0, -0.7];
    for wd in [0.0, 1e-4, 0.1] {
        let mut p = vec![Tensor::scalar(0.8)];
        let mut st = adam_state(1);
        for &g in &grads {
            adam_step(&mut p, &[Tensor::scalar(g)], &["w"], &mut st, 0.01, wd, false).unwrap();
        }
        let want = reference_adam(0.8, &grads, 0.01, wd);
        assert!((p[0].item() - want).abs() < 1e-12, "wd {wd}");
        assert_eq!(st.step, grads.len() as u64);
    }
    // The first bias-corrected step has magnitude lr.
    let mut p = vec![Tensor::scalar(0.0)];
    let mut st = adam_state(1);
    adam_step(&mut p, &[Tensor::scalar(123.0)], &["w"], &mut st, 1e-3, 0.0, false).unwrap();
    assert!((p[0].item() + 1e-3).abs() < 1e-9);
}

#[test]
fn adam_descends_quadratic() {
    let mut w = vec![Tensor::scalar(3.0)];
    let mut st = adam_state(1);
    for _ in 0..2000 {
        let g = Tensor::scalar(2.0 * w[0].item());
        adam_step(&mut w, &[g], &["w"], &mut st, 0.01, 0.0, false).unwrap();
    }
    assert!(w[0].item().abs() < 1e-2);
}

#[test]
fn adam_rejects_bad_gradients() {
    let mut p = vec![Tensor::scalar(1.0)];
    let mut st = adam_state(1);
    let err = adam_step(&mut p, &[Tensor::scalar(f64::NAN)], &["dec.bias"], &mut st, 1e-3, 0.0, false).unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "dec.bias"));
    assert_eq!(p[0].item(), 1.0);
    assert_eq!(st.step, 0);
    assert!(adam_step(&mut p, &[], &[], &mut st, 1e-3, 0.0, false).is_err());
}

#[test]
fn failed_step_aborts_training_with_snapshot() {
    let mut model = toy(0);
    let before = model.params.clone();
    // A silent reference leaves the loss undefined.
    let mut pairs = short_pairs(1);
    pairs[0].clean = AudioClip::new(vec![0.0; pairs[0].clean.len()]);
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path()).unwrap();
    let st = TrainState::zeros(&model);
    let err = train(&mut model, &pairs, &[], &quick_cfg(1), st, Some(&run)).unwrap_err();
    assert!(matches!(err, Error::Training(ref m) if m.contains("epoch 0 step 0")), "{err}");
    let snap = Checkpoint::load(run.aborted()).unwrap();
    assert_eq!(snap.train.unwrap().step, 0);
    assert_eq!(snap.model.params, before);
    assert!(!run.latest().exists());
}

#[test]
fn example_gradients_cover_every_parameter() {
    let model = toy(1);
    let pair = &short_pairs(1)[0];
    let (loss, grads) = example_gradients(&model, &pair.noisy.samples[..8000], &pair.clean.samples[..8000]).unwrap();
    assert!(loss.is_finite());
    assert_eq!(grads.len(), model.params.len());
    for ((_, name, p), g) in model.params.iter().zip(&grads) {
        assert_eq!(p.shape(), g.shape(), "{name}");
        assert!(g.is_finite(), "{name}");
    }
    assert!(grads.iter().filter(|g| g.data().iter().any(|&v| v != 0.0)).count() > grads.len() / 2);
}

#[test]
fn training_is_deterministic() {
    let pairs = short_pairs(3);
    let run = |seed| {
        let mut m = toy(seed);
        let st = TrainState::zeros(&m);
        let out = train(&mut m, &pairs, &[], &quick_cfg(2), st, None).unwrap();
        (m, out)
    };
    let (ma, a) = run(4);
    let (mb, b) = run(4);
    assert_eq!(a.history, b.history);
    assert_eq!(ma.params, mb.params);
    let losses: Vec<u64> = a.history.iter().map(|r| r.mean_loss.to_bits()).collect();
    let again: Vec<u64> = b.history.iter().map(|r| r.mean_loss.to_bits()).collect();
    assert_eq!(losses, again);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let pairs = short_pairs(3);
    let evals = &pairs[..1];
    let cfg = quick_cfg(4);
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path()).unwrap();

    let mut full = toy(9);
    let st = TrainState::zeros(&full);
    let whole = train(&mut full, &pairs, evals, &cfg, st, Some(&run)).unwrap();
    assert_eq!(whole.state.epoch, 4);

    // Pretend the run died after its second epoch.
    let ck = Checkpoint::load(run.epoch_checkpoint(1)).unwrap();
    let state = ck.train.clone().unwrap();
    assert_eq!(state.epoch, 2);
    let mut resumed = ck.model;
    let rest = train(&mut resumed, &pairs, evals, &cfg, state, None).unwrap();
    assert_eq!(rest.history.len(), 2);
    for (a, b) in whole.history[2..].iter().zip(&rest.history) {
        assert_eq!(a.epoch, b.epoch);
        assert!((a.mean_loss - b.mean_loss).abs() < 1e-6);
        assert!((a.eval_si_sdr.unwrap() - b.eval_si_sdr.unwrap()).abs() < 1e-6);
    }
    for ((_, name, a), (_, _, b)) in full.params.iter().zip(resumed.params.iter()) {
        let d = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-6, "{name}: {d}");
    }
    assert_eq!(rest.state.step, whole.state.step);

    let rows = read_history(&run.history()).unwrap();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [0, 1, 2, 3]);
    for (row, rec) in rows.iter().zip(&whole.history) {
        assert!((row.2 - rec.mean_loss).abs() <= 1e-9 * rec.mean_loss.abs().max(1.0));
    }
    let latest = Checkpoint::load(run.latest()).unwrap();
    assert_eq!(latest.model.params, full.params);
}
