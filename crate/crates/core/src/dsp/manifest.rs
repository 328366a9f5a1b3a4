//! Dataset manifests.
//!
//! A manifest is a plain text file with `[speech]`, `[noise]` and
//! `[synthetic]` sections. Under `[speech]` and `[noise]` each non-empty
//! line is a WAV path, relative paths being resolved against the manifest's
//! directory. Under `[synthetic]` lines are `key = value` pairs
//! (`seed`, `speech_clips`, `noise_clips`); the section's presence selects
//! the synthetic generator. `#` starts a comment.
//!
//! ```text
//! [speech]
//! clean/a.wav
//! [noise]
//! /data/noise/fan.wav
//! ```

use std::path::{Path, PathBuf};

use super::mix::ClipPool;
use super::synth::synthetic_pools;
use super::wav::wav_read;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub speech_clips: usize,
    pub noise_clips: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            speech_clips: 16,
            noise_clips: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub speech: Vec<PathBuf>,
    pub noise: Vec<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Speech,
    Noise,
    Synthetic,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Manifest> {
        let mut m = Manifest::default();
        let mut section = Section::None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Manifest(format!("line {}: {msg}", lineno + 1));
            if line.starts_with('[') {
                section = match line {
                    "[speech]" => Section::Speech,
                    "[noise]" => Section::Noise,
                    "[synthetic]" => {
                        m.synthetic.get_or_insert_with(SyntheticSpec::default);
                        Section::Synthetic
                    }
                    other => return Err(err(format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                Section::None => return Err(err("entry before any section header".into())),
                Section::Speech => m.speech.push(base.join(line)),
                Section::Noise => m.noise.push(base.join(line)),
                Section::Synthetic => {
                    let (k, v) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
                    let spec = m.synthetic.as_mut().expect("set on header");
                    let v = v.trim();
                    let parse = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{k}: {e}")));
                    match k.trim() {
                        "seed" => spec.seed = parse(v)?,
                        "speech_clips" => spec.speech_clips = parse(v)? as usize,
                        "noise_clips" => spec.noise_clips = parse(v)? as usize,
                        other => return Err(err(format!("unknown synthetic key `{other}`"))),
                    }
                }
            }
        }
        if m.synthetic.is_none() && (m.speech.is_empty() || m.noise.is_empty()) {
            return Err(Error::Manifest(
                "need at least one [speech] and one [noise] file, or a [synthetic] section".into(),
            ));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Reads every listed file, or generates the synthetic pools.
    pub fn pools(&self) -> Result<(ClipPool, ClipPool)> {
        if let Some(s) = &self.synthetic {
            return Ok(synthetic_pools(s.seed, s.speech_clips, s.noise_clips));
        }
        let read = |paths: &[PathBuf]| -> Result<ClipPool> {
            paths
                .iter()
                .map(|p| {
                    if !p.exists() {
                        return Err(Error::Manifest(format!("{} does not exist", p.display())));
                    }
                    wav_read(p)
                })
                .collect::<Result<Vec<_>>>()
                .map(ClipPool::new)
        };
        Ok((read(&self.speech)?, read(&self.noise)?))
    }
}
