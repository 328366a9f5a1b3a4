//! Binary checkpoints: model spec, named parameters and optional optimiser
//! state. The byte layout is described in `docs/checkpoint-format.md`.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::arch::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"HYCK";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moments and progress counters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    /// Optimiser steps taken.
    pub step: u64,
    /// First and second moments, in parameter order.
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl TrainState {
    pub fn zeros(model: &Model) -> TrainState {
        let z: Vec<Tensor> = model.params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        TrainState {
            epoch: 0,
            step: 0,
            m: z.clone(),
            v: z,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub train: Option<TrainState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn tensor(&mut self, t: &Tensor) {
        for d in t.shape().0 {
            self.u64(d as u64);
        }
        for x in t.data() {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows usize".into()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }
    fn tensor(&mut self) -> Result<Tensor> {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = self.usize()?;
        }
        let shape = Shape(dims);
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.saturating_mul(8) <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible tensor shape {shape}")))?;
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

impl Checkpoint {
    pub fn new(model: Model, train: Option<TrainState>) -> Checkpoint {
        Checkpoint { model, train }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let spec = &self.model.spec;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.0.extend_from_slice(&spec.hash()?);
        w.bytes(spec.to_toml()?.as_bytes());
        w.u32(self.model.params.len() as u32);
        for (_, name, t) in self.model.params.iter() {
            w.bytes(name.as_bytes());
            w.tensor(t);
        }
        match &self.train {
            None => w.u8(0),
            Some(s) => {
                w.u8(1);
                w.u64(s.epoch as u64);
                w.u64(s.step);
                for t in s.m.iter().chain(&s.v) {
                    w.tensor(t);
                }
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
        if buf.len() < 4 + 32 || &buf[..4] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let text = std::str::from_utf8(r.bytes()?).map_err(|_| Error::Checkpoint("spec is not UTF-8".into()))?;
        let spec = ModelSpec::from_toml(text)?;
        if spec.hash()? != hash {
            return Err(Error::Checkpoint("embedded spec does not match its hash".into()));
        }
        let mut model = Model::build(&spec, 0)?;
        let count = r.u32()? as usize;
        if count != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, model has {}",
                model.params.len()
            )));
        }
        let mut seen = vec![false; count];
        for _ in 0..count {
            let name = std::str::from_utf8(r.bytes()?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let t = r.tensor()?;
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            if std::mem::replace(&mut seen[id.0], true) {
                return Err(Error::Checkpoint(format!("parameter `{name}` stored twice")));
            }
            model
                .params
                .set(id, t)
                .map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
        }
        let train = match r.u8()? {
            0 => None,
            1 => {
                let epoch = r.usize()?;
                let step = r.u64()?;
                let n = model.params.len();
                let mut moments = Vec::with_capacity(2 * n);
                for _ in 0..2 * n {
                    moments.push(r.tensor()?);
                }
                let v = moments.split_off(n);
                for ((_, name, p), (m, v)) in model.params.iter().zip(moments.iter().zip(&v)) {
                    if m.shape() != p.shape() || v.shape() != p.shape() {
                        return Err(Error::Checkpoint(format!("optimiser state shape mismatch for `{name}`")));
                    }
                }
                Some(TrainState {
                    epoch,
                    step,
                    m: moments,
                    v,
                })
            }
            other => return Err(Error::Checkpoint(format!("bad optimiser-state flag {other}"))),
        };
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Checkpoint { model, train })
    }

    /// Writes atomically via a temporary file in the same directory.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&buf)
    }

    /// Fails unless the checkpoint was made for `spec`.
    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        if self.model.spec.hash()? != spec.hash()? {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for `{}` ({}), not `{}` ({})",
                self.model.spec.name,
                &self.model.spec.hash_hex()?[..12],
                spec.name,
                &spec.hash_hex()?[..12]
            )));
        }
        Ok(())
    }
}
