//! Checkpoint storage.
//!
//! Binary layout of one checkpoint file (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "MTNNCKPT"
//! version      u32      1
//! scalar bytes u8       4 (f32) or 8 (f64)
//! step         u64
//! input width  u32
//! n hidden     u32, then one u32 per hidden layer size
//! n tasks      u32, then per task: u32 byte length + UTF-8 name
//! n values     u64, then the trainable values
//! n running    u64, then the batch-norm running statistics
//! ```
//!
//! Trainable values are stored layer by layer (weights `input × output`
//! row-major, bias, scale, shift) followed by the heads (weights
//! `2 × last` row-major, two biases). Running statistics hold, per layer,
//! the means followed by the variances.
//!
//! A directory of checkpoints carries `manifest.json` mapping steps to files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{Architecture, ModelParams, Scalar};
use super::MtnnError;

pub const MAGIC: &[u8; 8] = b"MTNNCKPT";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Checkpoint<S: Scalar> {
    pub step: usize,
    pub params: Arc<ModelParams<S>>,
    /// Mean minibatch loss since the previous checkpoint.
    pub train_loss: f64,
}

/// Snapshots in strictly increasing step order.
#[derive(Clone)]
pub struct CheckpointStore<S: Scalar = f32> {
    checkpoints: Vec<Checkpoint<S>>,
}

impl<S: Scalar> std::fmt::Debug for CheckpointStore<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckpointStore").field("steps", &self.steps()).finish()
    }
}

impl<S: Scalar> Default for CheckpointStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    step: usize,
    file: String,
    train_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    architecture: Architecture,
    tasks: Vec<String>,
    checkpoints: Vec<ManifestEntry>,
}

impl<S: Scalar> CheckpointStore<S> {
    pub fn new() -> Self {
        CheckpointStore { checkpoints: Vec::new() }
    }

    pub fn push(&mut self, step: usize, params: ModelParams<S>, train_loss: f64) -> Result<(), MtnnError> {
        if let Some(last) = self.checkpoints.last() {
            if step <= last.step {
                return Err(MtnnError::NonIncreasingStep { last: last.step, step });
            }
        }
        self.checkpoints.push(Checkpoint {
            step,
            params: Arc::new(params),
            train_loss,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn checkpoints(&self) -> &[Checkpoint<S>] {
        &self.checkpoints
    }

    pub fn steps(&self) -> Vec<usize> {
        self.checkpoints.iter().map(|c| c.step).collect()
    }

    pub fn last(&self) -> Option<&Checkpoint<S>> {
        self.checkpoints.last()
    }

    pub fn at_step(&self, step: usize) -> Option<&Checkpoint<S>> {
        self.checkpoints
            .binary_search_by_key(&step, |c| c.step)
            .ok()
            .map(|i| &self.checkpoints[i])
    }

    /// Write every checkpoint plus the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), MtnnError> {
        let io = |e| MtnnError::Io {
            path: dir.display().to_string(),
            source: e,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let Some(first) = self.checkpoints.first() else {
            return Err(MtnnError::Format("empty checkpoint store".into()));
        };
        let mut entries = Vec::new();
        for c in &self.checkpoints {
            let file = format!("step-{:08}.ckpt", c.step);
            fs::write(dir.join(&file), encode(&c.params, c.step)).map_err(io)?;
            entries.push(ManifestEntry {
                step: c.step,
                file,
                train_loss: c.train_loss,
            });
        }
        let manifest = Manifest {
            version: FORMAT_VERSION,
            architecture: first.params.arch.clone(),
            tasks: first.params.tasks.clone(),
            checkpoints: entries,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| MtnnError::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n").map_err(io)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, MtnnError> {
        let read = |p: &Path| {
            fs::read(p).map_err(|e| MtnnError::Io {
                path: p.display().to_string(),
                source: e,
            })
        };
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)
            .map_err(|e| MtnnError::Format(e.to_string()))?;
        let mut store = CheckpointStore::new();
        for entry in manifest.checkpoints {
            let (step, params) = decode::<S>(&read(&dir.join(&entry.file))?)?;
            if step != entry.step {
                return Err(MtnnError::Format(format!("{} holds step {step}", entry.file)));
            }
            store.push(step, params, entry.train_loss)?;
        }
        Ok(store)
    }
}

pub fn encode<S: Scalar>(params: &ModelParams<S>, step: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + (params.values().len() + params.running().len()) * S::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(S::BYTES as u8);
    out.extend_from_slice(&(step as u64).to_le_bytes());
    out.extend_from_slice(&(params.input_width() as u32).to_le_bytes());
    out.extend_from_slice(&(params.arch.hidden().len() as u32).to_le_bytes());
    for &h in params.arch.hidden() {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.tasks.len() as u32).to_le_bytes());
    for t in &params.tasks {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    for block in [params.values(), params.running()] {
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block {
            v.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MtnnError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| MtnnError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MtnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, MtnnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<(usize, ModelParams<S>), MtnnError> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(MtnnError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(MtnnError::Format(format!("unsupported version {version}")));
    }
    let width = c.take(1)?[0] as usize;
    if width != S::BYTES {
        return Err(MtnnError::Format(format!("scalar width {width}, expected {}", S::BYTES)));
    }
    let step = c.u64()? as usize;
    let input_width = c.u32()? as usize;
    let n_hidden = c.u32()? as usize;
    let hidden = (0..n_hidden).map(|_| c.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let n_tasks = c.u32()? as usize;
    let mut tasks = Vec::with_capacity(n_tasks.min(1 << 16));
    for _ in 0..n_tasks {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|e| MtnnError::Format(e.to_string()))?;
        tasks.push(name.to_string());
    }
    let mut blocks = Vec::new();
    for _ in 0..2 {
        let n = c.u64()? as usize;
        let raw = c.take(n.checked_mul(S::BYTES).ok_or_else(|| MtnnError::Format("length overflow".into()))?)?;
        blocks.push(raw.chunks_exact(S::BYTES).map(S::read_le).collect::<Vec<S>>());
    }
    if c.at != bytes.len() {
        return Err(MtnnError::Format("trailing bytes".into()));
    }
    let running = blocks.pop().unwrap();
    let values = blocks.pop().unwrap();
    let params = ModelParams::from_parts(Architecture::new(hidden)?, input_width, tasks, values, running)?;
    Ok((step, params))
}
