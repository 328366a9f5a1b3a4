//! `hybridse` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure (e.g. diverged training),
//! 2 configuration or input error, 3 parameter budget unreachable,
//! 4 geometry mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybridse::arch::{derive_complex, hybrid_budget_errors, hybridize, real_budget, Budget, ModelSpec, Seeds};
use hybridse::autodiff::ActivationCosts;
use hybridse::checkpoint::{Checkpoint, TrainState};
use hybridse::complexity::{compare, count_macs, DEFAULT_FRAMES};
use hybridse::dsp::manifest::Manifest;
use hybridse::dsp::mix::make_training_pair;
use hybridse::dsp::norm::InputMode;
use hybridse::dsp::wav::{wav_read, wav_write, WavFormat};
use hybridse::layers::CReluVariant;
use hybridse::metrics::bucket_table;
use hybridse::pipeline::{enhance, evaluate_buckets, EVAL_SNRS_DB};
use hybridse::train::{train, RunDir, TrainConfig};
use hybridse::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hybridse", version, about = "Real, complex and hybrid speech-enhancement networks")]
#[command(after_help = "Every option can also be set through an environment variable \
named HYBRIDSE_<OPTION>, e.g. HYBRIDSE_SEED=3 or HYBRIDSE_FRAMES=100.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report parameter and MAC counts of one or more model configs.
    Analyze(AnalyzeArgs),
    /// Derive hybrid and complex counterparts of a real model config.
    Hybridize(HybridizeArgs),
    /// Train a model on pairs mixed from a manifest.
    Train(TrainArgs),
    /// Enhance a WAV file with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Score a checkpoint on SNR-bucketed mixtures.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    /// Complex ReLU form.
    #[arg(long, env = "HYBRIDSE_CRELU_VARIANT", value_parser = ["printed", "corrected"])]
    crelu_variant: Option<String>,
    /// Network input representation.
    #[arg(long, env = "HYBRIDSE_INPUT_MODE", value_parser = ["warped", "raw_complex"])]
    input_mode: Option<String>,
}

impl Overrides {
    fn apply(&self, spec: &mut ModelSpec) -> Result<()> {
        if let Some(v) = &self.crelu_variant {
            spec.crelu_variant = v.parse::<CReluVariant>().map_err(Error::Spec)?;
        }
        if let Some(m) = &self.input_mode {
            spec.input_mode = match m.as_str() {
                "warped" => InputMode::Warped,
                _ => InputMode::RawComplex,
            };
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Model config files (repeat or comma-separate).
    #[arg(long, env = "HYBRIDSE_MODEL", required = true, num_args = 1.., value_delimiter = ',')]
    model: Vec<PathBuf>,
    /// Frames for MAC totals (1250 = 10 s at hop 128).
    #[arg(long, env = "HYBRIDSE_FRAMES", default_value_t = DEFAULT_FRAMES)]
    frames: usize,
    /// Directory for text and TSV reports.
    #[arg(long, env = "HYBRIDSE_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HybridizeArgs {
    /// Real-domain model config.
    #[arg(long, env = "HYBRIDSE_MODEL")]
    model: PathBuf,
    /// Relative tolerance on each parameter budget.
    #[arg(long, env = "HYBRIDSE_TOL", default_value_t = hybridse::arch::DEFAULT_TOL)]
    tol: f64,
    /// Directory for the derived configs.
    #[arg(long, env = "HYBRIDSE_OUT", default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, env = "HYBRIDSE_MODEL")]
    model: PathBuf,
    #[arg(long, env = "HYBRIDSE_MANIFEST")]
    manifest: PathBuf,
    /// Run directory for checkpoints and history.
    #[arg(long, env = "HYBRIDSE_OUT")]
    out: PathBuf,
    #[arg(long, env = "HYBRIDSE_SEED", default_value_t = 0)]
    seed: u64,
    /// Training settings file (TOML); flags below override it.
    #[arg(long, env = "HYBRIDSE_TRAIN_CONFIG")]
    train_config: Option<PathBuf>,
    #[arg(long, env = "HYBRIDSE_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "HYBRIDSE_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "HYBRIDSE_STEPS_PER_EPOCH")]
    steps_per_epoch: Option<usize>,
    /// Train on random crops of this many frames.
    #[arg(long, env = "HYBRIDSE_CROP_FRAMES")]
    crop_frames: Option<usize>,
    #[arg(long, env = "HYBRIDSE_LR_INIT")]
    lr_init: Option<f64>,
    #[arg(long, env = "HYBRIDSE_LR_FINAL")]
    lr_final: Option<f64>,
    #[arg(long, env = "HYBRIDSE_WEIGHT_DECAY")]
    weight_decay: Option<f64>,
    /// Use coupled L2 regularisation instead of decoupled weight decay.
    #[arg(long, env = "HYBRIDSE_COUPLED_L2")]
    coupled_l2: bool,
    /// Number of fixed 10 s training pairs.
    #[arg(long, env = "HYBRIDSE_PAIRS", default_value_t = 8)]
    pairs: usize,
    /// Held-out pairs scored after every epoch.
    #[arg(long, env = "HYBRIDSE_EVAL_PAIRS", default_value_t = 0)]
    eval_pairs: usize,
    /// Continue from the run directory's latest checkpoint.
    #[arg(long, env = "HYBRIDSE_RESUME")]
    resume: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long, env = "HYBRIDSE_CHECKPOINT")]
    checkpoint: PathBuf,
    /// Input WAV.
    #[arg(long)]
    input: PathBuf,
    /// Output WAV (16-bit PCM, 16 kHz).
    #[arg(long, env = "HYBRIDSE_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, env = "HYBRIDSE_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, env = "HYBRIDSE_MANIFEST")]
    manifest: PathBuf,
    /// Mixing SNRs in dB.
    #[arg(long, env = "HYBRIDSE_SNR", num_args = 1, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Mixtures per SNR.
    #[arg(long, env = "HYBRIDSE_CLIPS", default_value_t = 2)]
    clips: usize,
    #[arg(long, env = "HYBRIDSE_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for per-clip CSV files.
    #[arg(long, env = "HYBRIDSE_OUT")]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget(_) => 3,
        Error::Geometry(_) => 4,
        Error::Training(_) | Error::NonFinite { .. } | Error::NonFiniteGradient(_) => 1,
        _ => 2,
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    if a.frames == 0 {
        return Err(Error::Spec("--frames must be at least 1".into()));
    }
    let specs: Vec<ModelSpec> = a.model.iter().map(ModelSpec::load).collect::<Result<_>>()?;
    let costs = ActivationCosts::default();
    let reports = specs
        .iter()
        .map(|s| count_macs(s, a.frames, &costs))
        .collect::<Result<Vec<_>>>()?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        for r in &reports {
            write(&out.join(format!("{}.txt", r.model)), &r.to_text())?;
            write(&out.join(format!("{}.tsv", r.model)), &r.to_tsv())?;
        }
    }
    for r in &reports {
        println!("{}", r.to_text());
    }
    if reports.len() >= 2 {
        let cmp = compare(reports)?;
        print!("{}", cmp.to_text());
        if let Some(out) = &a.out {
            write(&out.join("comparison.tsv"), &cmp.to_tsv())?;
        }
    }
    Ok(())
}

fn hybridize_cmd(a: &HybridizeArgs) -> Result<()> {
    let mut real = ModelSpec::load(&a.model)?;
    a.overrides.apply(&mut real)?;
    let budget = real_budget(&real)?;
    let hybrid = hybridize(&real, a.tol, &Seeds::default())?;
    let complex = derive_complex(&real, a.tol, &Seeds::default())?;
    create_dir(&a.out)?;
    for spec in [&hybrid, &complex] {
        let path = a.out.join(format!("{}.toml", spec.name.to_lowercase()));
        write(&path, &spec.to_toml()?)?;
        println!("wrote {}", path.display());
    }
    let errs = hybrid_budget_errors(
        &hybrid,
        Budget {
            encoder: budget.encoder,
            decoder: budget.decoder,
        },
    )?;
    println!("budget N_f = {}, N_g = {} (tolerance {:.2}%)", budget.encoder, budget.decoder, 100.0 * a.tol);
    for (label, e) in ["real encoder", "real decoder", "complex encoder", "complex decoder"]
        .iter()
        .zip(errs)
    {
        println!("  {} {label:<16} {:+.3}%", hybrid.name, 100.0 * e);
    }
    let cplan = hybridse::arch::Plan::new(&complex)?;
    let cb = cplan.complex.as_ref().expect("complex branch");
    println!(
        "  {} encoder {:+.3}%, decoder {:+.3}%",
        complex.name,
        100.0 * (cb.encoder_params(cplan.kernel) as f64 / budget.encoder as f64 - 1.0),
        100.0 * (cb.decoder_params(cplan.kernel) as f64 / budget.decoder as f64 - 1.0)
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    require_file(&a.model)?;
    require_file(&a.manifest)?;
    let mut spec = ModelSpec::load(&a.model)?;
    a.overrides.apply(&mut spec)?;
    let manifest = Manifest::load(&a.manifest)?;
    let mut cfg = match &a.train_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str::<TrainConfig>(&text)?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.steps_per_epoch {
        cfg.steps_per_epoch = v;
    }
    if a.crop_frames.is_some() {
        cfg.crop_frames = a.crop_frames;
    }
    if let Some(v) = a.lr_init {
        cfg.lr_init = v;
    }
    if let Some(v) = a.lr_final {
        cfg.lr_final = v;
    }
    if let Some(v) = a.weight_decay {
        cfg.weight_decay = v;
    }
    cfg.coupled_l2 |= a.coupled_l2;
    cfg.validate()?;
    if a.pairs == 0 {
        return Err(Error::Training("--pairs must be at least 1".into()));
    }

    let run = RunDir::new(&a.out)?;
    let (mut model, state) = if a.resume {
        let ck = Checkpoint::load(run.latest())?;
        ck.check_spec(&spec)?;
        let state = ck.train.clone().ok_or_else(|| Error::Checkpoint("no optimiser state to resume".into()))?;
        (ck.model, state)
    } else {
        let model = hybridse::arch::Model::build(&spec, a.seed)?;
        let state = TrainState::zeros(&model);
        (model, state)
    };
    let (speech, noise) = manifest.pools()?;
    let pairs = (0..a.pairs as u64)
        .map(|i| make_training_pair(&speech, &noise, a.seed.wrapping_mul(1_000_003).wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let eval = (0..a.eval_pairs as u64)
        .map(|i| make_training_pair(&speech, &noise, a.seed.wrapping_mul(1_000_003).wrapping_add(1 << 32).wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    println!(
        "training {} ({} params) for epochs {}..{} on {} pairs",
        spec.name,
        model.param_count(),
        state.epoch,
        cfg.epochs,
        pairs.len()
    );
    let outcome = train(&mut model, &pairs, &eval, &cfg, state, Some(&run))?;
    for r in &outcome.history {
        println!("{}", r.to_tsv_row());
    }
    if let Some(last) = outcome.history.last() {
        println!(
            "final epoch {} loss {:.4}{}",
            last.epoch,
            last.mean_loss,
            match (last.eval_si_sdr, last.eval_stoi) {
                (Some(s), Some(t)) => format!(" eval si_sdr {s:.3} dB stoi {t:.4}"),
                _ => String::new(),
            }
        );
    }
    println!("checkpoint {}", run.latest().display());
    Ok(())
}

fn enhance_cmd(a: &EnhanceArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.input)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let clip = wav_read(&a.input)?;
    let out = enhance(&ck.model, &clip)?;
    wav_write(&a.out, &out, WavFormat::Pcm16)?;
    println!(
        "wrote {} ({} samples from {} input samples)",
        a.out.display(),
        out.len(),
        clip.len()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.manifest)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let manifest = Manifest::load(&a.manifest)?;
    let snrs = a.snr.clone().unwrap_or_else(|| EVAL_SNRS_DB.to_vec());
    if snrs.is_empty() || a.clips == 0 {
        return Err(Error::Spec("need at least one SNR and one clip".into()));
    }
    let (speech, noise) = manifest.pools()?;
    let (noisy, model) = evaluate_buckets(&ck.model, &speech, &noise, &snrs, a.clips, a.seed)?;
    print!("{}", bucket_table(&[&noisy, &model]));
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(&out.join("noisy.csv"), &noisy.to_csv())?;
        write(&out.join("model.csv"), &model.to_csv())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Hybridize(a) => hybridize_cmd(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Enhance(a) => enhance_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
