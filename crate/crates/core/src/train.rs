//! Adam training on negative SI-SDR with an exponential learning-rate decay.
//!
//! An epoch visits a fixed pool of training pairs in an order drawn from
//! `(seed, epoch)`; optional crops are drawn from `(seed, epoch, step)`.
//! Nothing else is random, so a run resumed from an epoch checkpoint
//! continues exactly as the uninterrupted run would.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::Model;
use crate::autodiff::Graph;
use crate::checkpoint::{Checkpoint, TrainState};
use crate::dsp::mix::TrainingPair;
use crate::dsp::stft::{signal_len, EDGE_TRIM, HOP};
use crate::error::{Error, Result};
use crate::metrics::{neg_si_sdr_loss, si_sdr, stoi};
use crate::pipeline::{aligned_reference, enhance, forward_signal, trim_var, Prepared};
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub weight_decay: f64,
    /// Add `weight_decay · param` to the gradient instead of decaying
    /// the parameter directly.
    pub coupled_l2: bool,
    pub batch_size: usize,
    /// Optimiser steps per epoch; `0` means one pass over the pair pool.
    pub steps_per_epoch: usize,
    /// Train on random crops of this many STFT frames instead of whole pairs.
    pub crop_frames: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr_init: 1e-3,
            lr_final: 1e-4,
            weight_decay: 1e-4,
            coupled_l2: false,
            batch_size: 4,
            steps_per_epoch: 0,
            crop_frames: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Training(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr_init > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_init) {
            return bad(format!(
                "need 0 < lr_final <= lr_init, got lr_init {} and lr_final {}",
                self.lr_init, self.lr_final
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.crop_frames.is_some_and(|f| signal_len(f) <= 2 * EDGE_TRIM) {
            return bad(format!("crops must span more than {} samples", 2 * EDGE_TRIM));
        }
        Ok(())
    }
}

/// `lr_init · (lr_final/lr_init)^(epoch/(epochs−1))`.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::Training(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    if cfg.epochs == 1 {
        return Ok(cfg.lr_init);
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    Ok(cfg.lr_init * (cfg.lr_final / cfg.lr_init).powf(frac))
}

/// One Adam update of `params` in place. `names` label errors.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    names: &[&str],
    state: &mut TrainState,
    lr: f64,
    weight_decay: f64,
    coupled_l2: bool,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::Training(format!(
            "adam_step: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params[i].shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: params[i].shape(),
                rhs: g.shape(),
            });
        }
        if !g.is_finite() {
            let name = names.get(i).copied().unwrap_or("?");
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for j in 0..pd.len() {
            let gj = if coupled_l2 { gd[j] + weight_decay * pd[j] } else { gd[j] };
            md[j] = BETA1 * md[j] + (1.0 - BETA1) * gj;
            vd[j] = BETA2 * vd[j] + (1.0 - BETA2) * gj * gj;
            let step = (md[j] / c1) / ((vd[j] / c2).sqrt() + ADAM_EPS);
            let decay = if coupled_l2 { 0.0 } else { weight_decay * pd[j] };
            pd[j] -= lr * (step + decay);
        }
    }
    Ok(())
}

/// Loss and parameter gradients for one (noisy, clean) example.
pub fn example_gradients(model: &Model, noisy: &[f64], clean: &[f64]) -> Result<(f64, Vec<Tensor>)> {
    let prep = Prepared::new(noisy, model.spec.input_mode)?;
    let reference = aligned_reference(clean, prep.covered())?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, true);
    let wave = forward_signal(&mut g, model, &p, &prep)?;
    let wave = trim_var(&mut g, wave)?;
    let loss = neg_si_sdr_loss(&mut g, wave, reference)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?;
    let out = p
        .vars()
        .iter()
        .zip(model.params.iter())
        .map(|(&v, (_, _, t))| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, out))
}

/// Mean loss over a batch and one optimiser step.
pub fn train_step(
    model: &mut Model,
    state: &mut TrainState,
    batch: &[(&[f64], &[f64])],
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for (noisy, clean) in batch {
        let (loss, grads) = example_gradients(model, noisy, clean)?;
        total += loss;
        acc = Some(match acc {
            None => grads,
            Some(a) => a
                .iter()
                .zip(&grads)
                .map(|(x, y)| x.zip_with(y, |p, q| p + q))
                .collect::<Result<_>>()?,
        });
    }
    let n = batch.len() as f64;
    if !total.is_finite() {
        return Err(Error::Training(format!("loss is {total}")));
    }
    let grads: Vec<Tensor> = acc.expect("non-empty").iter().map(|g| g.map(|x| x / n)).collect();
    let names: Vec<String> = model.params.iter().map(|(_, n, _)| n.to_string()).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let ids: Vec<_> = model.params.ids().collect();
    let mut params: Vec<Tensor> = ids.iter().map(|&id| model.params.get(id).clone()).collect();
    adam_step(&mut params, &grads, &names, state, lr, cfg.weight_decay, cfg.coupled_l2)?;
    for (id, t) in ids.into_iter().zip(params) {
        model.params.set(id, t)?;
    }
    Ok(total / n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub eval_si_sdr: Option<f64>,
    pub eval_stoi: Option<f64>,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\tlr\tmean_loss\teval_si_sdr\teval_stoi";

    pub fn to_tsv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        format!(
            "{}\t{:e}\t{:.9}\t{}\t{}",
            self.epoch,
            self.lr,
            self.mean_loss,
            opt(self.eval_si_sdr),
            opt(self.eval_stoi)
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub state: TrainState,
}

/// Output locations of a training run.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub dir: PathBuf,
}

impl RunDir {
    pub fn new(dir: impl Into<PathBuf>) -> Result<RunDir> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(RunDir { dir })
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.dir.join(format!("epoch-{epoch:03}.hyck"))
    }

    pub fn latest(&self) -> PathBuf {
        self.dir.join("latest.hyck")
    }

    pub fn aborted(&self) -> PathBuf {
        self.dir.join("aborted.hyck")
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join("history.tsv")
    }

    fn append_history(&self, rec: &EpochRecord) -> Result<()> {
        let path = self.history();
        let fresh = !path.exists();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut s = String::new();
        if fresh {
            let _ = writeln!(s, "{}", EpochRecord::HEADER);
        }
        let _ = writeln!(s, "{}", rec.to_tsv_row());
        f.write_all(s.as_bytes()).map_err(|e| Error::io(&path, e))
    }
}

fn crop<'a>(pair: &'a TrainingPair, frames: Option<usize>, rng: &mut ChaCha8Rng) -> (&'a [f64], &'a [f64]) {
    let (noisy, clean) = (&pair.noisy.samples[..], &pair.clean.samples[..]);
    match frames {
        Some(f) if signal_len(f) < noisy.len() => {
            let len = signal_len(f);
            let start = HOP * rng.gen_range(0..=(noisy.len() - len) / HOP);
            (&noisy[start..start + len], &clean[start..start + len])
        }
        _ => (noisy, clean),
    }
}

/// Mean SI-SDR and STOI of the enhanced pairs against their clean signals.
pub fn evaluate(model: &Model, pairs: &[TrainingPair]) -> Result<(f64, f64)> {
    let (mut sdr, mut st) = (0.0, 0.0);
    for pair in pairs {
        let out = enhance(model, &pair.noisy)?;
        let covered = out.len() + 2 * EDGE_TRIM;
        let reference = aligned_reference(&pair.clean.samples, covered)?;
        sdr += si_sdr(&out.samples, reference)?;
        st += stoi(&out.samples, reference)?;
    }
    let n = pairs.len().max(1) as f64;
    Ok((sdr / n, st / n))
}

/// Trains `model` for the epochs after `state.epoch`. With a run directory,
/// a checkpoint is written after every epoch and the history appended; on
/// failure the pre-step state is saved to `aborted.hyck`.
pub fn train(
    model: &mut Model,
    pairs: &[TrainingPair],
    eval_pairs: &[TrainingPair],
    cfg: &TrainConfig,
    mut state: TrainState,
    run: Option<&RunDir>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Training("no training pairs".into()));
    }
    let steps = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        pairs.len().div_ceil(cfg.batch_size)
    };
    let mut history = Vec::new();
    for epoch in state.epoch..cfg.epochs {
        let lr = lr_at(cfg, epoch)?;
        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut order: Vec<usize> = Vec::new();
        let mut total = 0.0;
        for step in 0..steps {
            let mut batch = Vec::with_capacity(cfg.batch_size);
            let mut crop_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1) ^ ((epoch * steps + step) as u64) << 20);
            for _ in 0..cfg.batch_size {
                if order.is_empty() {
                    order = (0..pairs.len()).collect();
                    order.shuffle(&mut order_rng);
                }
                let i = order.pop().expect("refilled");
                batch.push(crop(&pairs[i], cfg.crop_frames, &mut crop_rng));
            }
            let backup = (model.params.clone(), state.clone());
            match train_step(model, &mut state, &batch, lr, cfg) {
                Ok(loss) => total += loss,
                Err(e) => {
                    if let Some(run) = run {
                        let mut before = model.clone();
                        before.params = backup.0;
                        Checkpoint::new(before, Some(backup.1)).save(run.aborted())?;
                    }
                    return Err(Error::Training(format!("epoch {epoch} step {step}: {e}")));
                }
            }
        }
        state.epoch = epoch + 1;
        let (eval_si_sdr, eval_stoi) = if eval_pairs.is_empty() {
            (None, None)
        } else {
            let (a, b) = evaluate(model, eval_pairs)?;
            (Some(a), Some(b))
        };
        let rec = EpochRecord {
            epoch,
            lr,
            mean_loss: total / steps as f64,
            eval_si_sdr,
            eval_stoi,
        };
        if let Some(run) = run {
            let ck = Checkpoint::new(model.clone(), Some(state.clone()));
            ck.save(run.epoch_checkpoint(epoch))?;
            ck.save(run.latest())?;
            run.append_history(&rec)?;
        }
        history.push(rec);
    }
    Ok(TrainOutcome { history, state })
}

/// Loads a history file written by [`train`].
pub fn read_history(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let parse = |i: usize| -> Option<&str> { f.get(i).copied() };
            let bad = || Error::Training(format!("malformed history row `{l}`"));
            Ok((
                parse(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
                parse(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
                parse(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            ))
        })
        .collect()
}
