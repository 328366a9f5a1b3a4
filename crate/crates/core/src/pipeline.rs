//! End-to-end enhancement: waveform → STFT → network → mask → waveform.
//!
//! The mask is applied to the raw spectrogram `Y`; only the network input is
//! normalised. A hybrid model's complex correction is produced in the
//! normalised domain and is mapped back to raw scale (when the input was
//! warped) before it is added.
//!
//! Enhanced signals cover the samples spanned by whole STFT frames, minus
//! [`EDGE_TRIM`] samples at each end.

use crate::arch::{apply_output_graph, Domain, MaskVars, Model};
use crate::autodiff::{Graph, Var};
use crate::dsp::norm::{denormalize_complex, normalize, InputMode};
use crate::dsp::stft::{signal_len, stft_samples, Spectrogram, EDGE_TRIM};
use crate::dsp::AudioClip;
use crate::error::{Error, Result};
use crate::layers::{Bound, ParamId};
use crate::tensor::{ComplexTensor, Tensor, TIME};

/// Spectra of one input signal.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: Spectrogram,
    pub input: ComplexTensor,
}

impl Prepared {
    pub fn new(samples: &[f64], mode: InputMode) -> Result<Prepared> {
        let spec = Spectrogram::new(stft_samples(samples)?)?;
        let input = normalize(&spec).network_input(&spec, mode);
        Ok(Prepared { spec, input })
    }

    pub fn frames(&self) -> usize {
        self.spec.frames()
    }

    /// Samples covered by the frames.
    pub fn covered(&self) -> usize {
        signal_len(self.frames())
    }
}

/// Builds the graph from a prepared input to the enhanced `(1, 1, 1, L)`
/// waveform, `L` = [`Prepared::covered`].
pub fn forward_signal(g: &mut Graph, model: &Model, p: &Bound, prep: &Prepared) -> Result<Var> {
    let y = g.complex_constant(prep.spec.bins.clone());
    let x = g.complex_constant(prep.input.clone());
    let out = match model.forward(g, p, x)? {
        MaskVars::Hybrid { mag_mask, correction } if model.spec.input_mode == InputMode::Warped => {
            MaskVars::Hybrid {
                mag_mask,
                correction: denormalize_complex(g, correction)?,
            }
        }
        other => other,
    };
    let s = apply_output_graph(g, out, y)?;
    g.istft(s.re, s.im)
}

/// Slices [`EDGE_TRIM`] samples off each end of a `(1, 1, 1, L)` signal.
pub fn trim_var(g: &mut Graph, x: Var) -> Result<Var> {
    let len = g.shape(x).0[TIME];
    if len <= 2 * EDGE_TRIM {
        return Err(Error::Audio(format!(
            "signal of {len} samples is too short to trim {EDGE_TRIM} per side"
        )));
    }
    g.slice(x, TIME, EDGE_TRIM, len - 2 * EDGE_TRIM)
}

/// Reference samples aligned with a trimmed enhanced signal.
pub fn aligned_reference(reference: &[f64], covered: usize) -> Result<&[f64]> {
    if reference.len() < covered || covered <= 2 * EDGE_TRIM {
        return Err(Error::Audio(format!(
            "reference of {} samples cannot be aligned to {covered} covered samples",
            reference.len()
        )));
    }
    Ok(&reference[EDGE_TRIM..covered - EDGE_TRIM])
}

/// Enhances a clip. The output has `covered − 2·EDGE_TRIM` samples and
/// starts at input sample `EDGE_TRIM`.
pub fn enhance(model: &Model, clip: &AudioClip) -> Result<AudioClip> {
    let prep = Prepared::new(&clip.samples, model.spec.input_mode)?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let wave = forward_signal(&mut g, model, &p, &prep)?;
    let wave = trim_var(&mut g, wave)?;
    Ok(AudioClip::new(g.value(wave).data().to_vec()))
}

/// Model mask outputs for a clip, without synthesis.
pub fn masks(model: &Model, clip: &AudioClip) -> Result<crate::arch::MaskOutput> {
    let prep = Prepared::new(&clip.samples, model.spec.input_mode)?;
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let x = g.complex_constant(prep.input);
    let out = model.forward(&mut g, &p, x)?;
    Ok(crate::arch::MaskOutput::from_graph(&g, out))
}

/// Parameter settings with known outputs, for testing the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DebugOutput {
    /// Mask `1 + 0i` (complex models only).
    Identity,
    /// Hybrid `M_mag = 0`, correction `0`.
    Zero,
}

fn set(model: &mut Model, name: &str, f: impl Fn(&Tensor) -> Tensor) -> Result<()> {
    let id: ParamId = model
        .params
        .id(name)
        .ok_or_else(|| Error::Spec(format!("{}: no parameter `{name}`", model.spec.name)))?;
    let t = f(model.params.get(id));
    model.params.set(id, t)
}

/// Overwrites the final decoder layer(s) so the model emits `kind`.
pub fn make_debug(model: &mut Model, kind: DebugOutput) -> Result<()> {
    let zeros = |t: &Tensor| Tensor::zeros(t.shape());
    let fill = |v: f64| move |t: &Tensor| Tensor::full(t.shape(), v);
    let last = |branch: Option<&crate::arch::BranchPlan>| branch.and_then(|b| b.decoder.last()).map(|l| l.name.clone());
    match (kind, model.spec.domain) {
        (DebugOutput::Identity, Domain::Complex) => {
            let name = last(model.plan.complex.as_ref()).expect("complex decoder");
            // Lifted bias: re = b1 − b2, im = b1 + b2.
            set(model, &format!("{name}.l1.weight"), zeros)?;
            set(model, &format!("{name}.l2.weight"), zeros)?;
            set(model, &format!("{name}.l1.bias"), fill(0.5))?;
            set(model, &format!("{name}.l2.bias"), fill(-0.5))?;
        }
        (DebugOutput::Zero, Domain::Hybrid) => {
            let r = last(model.plan.real.as_ref()).expect("real decoder");
            let c = last(model.plan.complex.as_ref()).expect("complex decoder");
            set(model, &format!("{r}.weight"), zeros)?;
            set(model, &format!("{r}.bias"), fill(-1e3))?;
            for part in ["l1.weight", "l2.weight", "l1.bias", "l2.bias"] {
                set(model, &format!("{c}.{part}"), zeros)?;
            }
        }
        (kind, domain) => {
            return Err(Error::Spec(format!(
                "debug output {kind:?} is not defined for {domain} models"
            )))
        }
    }
    Ok(())
}

/// Default evaluation SNRs in dB.
pub const EVAL_SNRS_DB: [f64; 4] = [-5.0, 0.0, 10.0, 20.0];

/// Seed of the `k`-th evaluation pair at bucket `b`, disjoint from the
/// training seeds derived from the same base seed.
pub fn eval_pair_seed(seed: u64, bucket: usize, k: usize) -> u64 {
    seed.wrapping_add(1 << 40).wrapping_add((bucket as u64) << 20).wrapping_add(k as u64)
}

/// Mixes `clips` pairs at every SNR and scores the noisy input and the
/// enhanced output against the clean signal on the trimmed span.
pub fn evaluate_buckets(
    model: &Model,
    speech: &crate::dsp::mix::ClipPool,
    noise: &crate::dsp::mix::ClipPool,
    snrs_db: &[f64],
    clips: usize,
    seed: u64,
) -> Result<(crate::metrics::MetricReport, crate::metrics::MetricReport)> {
    use crate::metrics::{measure_snr, si_sdr, stoi, ClipMetrics, MetricReport};
    let mut noisy_rep = MetricReport::new("noisy");
    let mut model_rep = MetricReport::new(model.spec.name.clone());
    for (b, &snr) in snrs_db.iter().enumerate() {
        for k in 0..clips {
            let pair = crate::dsp::mix::make_pair_at(speech, noise, eval_pair_seed(seed, b, k), Some(snr))?;
            let out = enhance(model, &pair.noisy)?;
            let covered = out.len() + 2 * EDGE_TRIM;
            let reference = aligned_reference(&pair.clean.samples, covered)?;
            let noisy = aligned_reference(&pair.noisy.samples, covered)?;
            let residual: Vec<f64> = pair.noisy.samples.iter().zip(&pair.clean.samples).map(|(y, s)| y - s).collect();
            let snr_db = measure_snr(&pair.clean.samples, &residual)?;
            let id = format!("snr{snr}-{k}");
            let score = |x: &[f64]| -> ClipMetrics {
                ClipMetrics {
                    clip_id: id.clone(),
                    snr_bucket: snr,
                    snr_db,
                    si_sdr: si_sdr(x, reference).unwrap_or(f64::NAN),
                    stoi: stoi(x, reference).unwrap_or(f64::NAN),
                }
            };
            noisy_rep.clips.push(score(noisy));
            model_rep.clips.push(score(&out.samples));
        }
    }
    Ok((noisy_rep, model_rep))
}
