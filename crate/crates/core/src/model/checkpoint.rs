//! Checkpoints, their averaging and vocabulary extension, and the binary
//! checkpoint container.
//!
//! File layout (all integers little-endian):
//! ```text
//! magic      8 bytes  "STCKPT\0\0"
//! version    u32      CHECKPOINT_VERSION
//! config     hidden u64, layers u64, dropout f64, lr f64, batch u64,
//!            src_vocab u64, tgt_vocab u64, max_decode u64,
//!            input_feeding u8, clip_norm f64, seed u64
//! step       u64
//! vocab x2   count u32, then per token: len u32 + UTF-8 bytes (source first)
//! tensors    count u32, then per tensor: name (len u32 + bytes),
//!            rows u64, cols u64, rows*cols f32 values
//! ```
//! Tensors are the parameters under their canonical names followed by the
//! first and second moments under `<name>.m` and `<name>.v`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{fill_uniform, ModelParams};
use super::tensor::Matrix;
use crate::text::Vocabulary;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"STCKPT\0\0";

/// Parameters, Adam moments and the vocabularies they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub first_moment: ModelParams<f32>,
    pub second_moment: ModelParams<f32>,
    pub step: u64,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub config: ModelConfig,
}

/// Fresh checkpoint at step 0. Vocabulary sizes in `config` are taken from
/// the vocabularies.
pub fn init_model(config: &ModelConfig, src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> Result<Checkpoint> {
    let mut config = config.clone();
    config.src_vocab_size = src_vocab.len();
    config.tgt_vocab_size = tgt_vocab.len();
    let params = ModelParams::init(&config)?;
    Ok(Checkpoint {
        first_moment: params.zeros_like(),
        second_moment: params.zeros_like(),
        params,
        step: 0,
        src_vocab: src_vocab.clone(),
        tgt_vocab: tgt_vocab.clone(),
        config,
    })
}

/// Which snapshots to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingWindow {
    /// The `k` latest snapshots.
    LastK(usize),
    /// The `k` snapshots up to and including the one at `step`.
    EndingAt { step: u64, k: usize },
}

impl AveragingWindow {
    pub fn k(&self) -> usize {
        match *self {
            AveragingWindow::LastK(k) | AveragingWindow::EndingAt { k, .. } => k,
        }
    }
}

/// Indices (into `steps`) of the snapshots selected by `window`, oldest
/// first. Fewer than `k` snapshots are used when fewer exist.
pub fn select_window(steps: &[u64], window: AveragingWindow) -> Result<Vec<usize>> {
    if window.k() == 0 {
        return Err(Error::config("averaging window must be at least 1"));
    }
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let end = match window {
        AveragingWindow::LastK(_) => order.len(),
        AveragingWindow::EndingAt { step, .. } => match order.iter().position(|&i| steps[i] == step) {
            Some(pos) => pos + 1,
            None => return Err(Error::InvalidInput(format!("no snapshot at step {step}"))),
        },
    };
    if end == 0 {
        return Err(Error::InvalidInput("no checkpoints to average".into()));
    }
    Ok(order[end.saturating_sub(window.k())..end].to_vec())
}

/// Element-wise mean of the parameters in `window`; moments are zeroed and
/// the step is the largest in the window.
///
/// Each element's values are sorted before summation, so the result does not
/// depend on checkpoint order.
pub fn average_checkpoints(checkpoints: &[Checkpoint], window: AveragingWindow) -> Result<Checkpoint> {
    let steps: Vec<u64> = checkpoints.iter().map(|c| c.step).collect();
    let chosen: Vec<&Checkpoint> = select_window(&steps, window)?
        .into_iter()
        .map(|i| &checkpoints[i])
        .collect();
    let first = chosen[0];
    for c in &chosen[1..] {
        if c.src_vocab != first.src_vocab || c.tgt_vocab != first.tgt_vocab {
            return Err(Error::VocabMismatch("averaged checkpoints differ in vocabulary".into()));
        }
        first.params.check_same_shape(&c.params)?;
    }
    let k = chosen.len();
    let mut params = first.params.clone();
    let sources: Vec<Vec<(String, &Matrix<f32>)>> = chosen.iter().map(|c| c.params.tensors()).collect();
    let mut values = Vec::with_capacity(k);
    for (t, (_, out)) in params.tensors_mut().into_iter().enumerate() {
        for (e, x) in out.data_mut().iter_mut().enumerate() {
            values.clear();
            values.extend(sources.iter().map(|s| s[t].1.data()[e]));
            values.sort_by(f32::total_cmp);
            let sum: f64 = values.iter().map(|&v| v as f64).sum();
            *x = (sum / k as f64) as f32;
        }
    }
    Ok(Checkpoint {
        first_moment: params.zeros_like(),
        second_moment: params.zeros_like(),
        params,
        step: chosen.iter().map(|c| c.step).max().unwrap_or(0),
        src_vocab: first.src_vocab.clone(),
        tgt_vocab: first.tgt_vocab.clone(),
        config: first.config.clone(),
    })
}

/// Grows the embeddings and output projection to cover supersets of the
/// checkpoint's vocabularies. Existing rows are kept bit for bit; appended
/// rows are uniform in `[-0.1, 0.1]`; appended moment rows are zero.
pub fn extend_checkpoint_vocab(
    checkpoint: &Checkpoint,
    new_src_vocab: &Vocabulary,
    new_tgt_vocab: &Vocabulary,
    seed: u64,
) -> Result<Checkpoint> {
    if !checkpoint.src_vocab.is_prefix_of(new_src_vocab) {
        return Err(Error::VocabMismatch("new source vocabulary remaps existing ids".into()));
    }
    if !checkpoint.tgt_vocab.is_prefix_of(new_tgt_vocab) {
        return Err(Error::VocabMismatch("new target vocabulary remaps existing ids".into()));
    }
    let extra_src = new_src_vocab.len() - checkpoint.src_vocab.len();
    let extra_tgt = new_tgt_vocab.len() - checkpoint.tgt_vocab.len();
    let mut out = checkpoint.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grow = |m: &mut Matrix<f32>, extra: usize, random: bool| {
        let old = m.rows();
        m.grow_rows(extra);
        if random && extra > 0 {
            let mut fresh = Matrix::zeros(extra, m.cols());
            fill_uniform(&mut fresh, &mut rng);
            for r in 0..extra {
                m.row_mut(old + r).copy_from_slice(fresh.row(r));
            }
        }
    };
    grow(&mut out.params.src_embed, extra_src, true);
    grow(&mut out.params.tgt_embed, extra_tgt, true);
    grow(&mut out.params.output, extra_tgt, true);
    for moments in [&mut out.first_moment, &mut out.second_moment] {
        grow(&mut moments.src_embed, extra_src, false);
        grow(&mut moments.tgt_embed, extra_tgt, false);
        grow(&mut moments.output, extra_tgt, false);
    }
    out.src_vocab = new_src_vocab.clone();
    out.tgt_vocab = new_tgt_vocab.clone();
    out.config.src_vocab_size = new_src_vocab.len();
    out.config.tgt_vocab_size = new_tgt_vocab.len();
    Ok(out)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_vocab(buf: &mut Vec<u8>, vocab: &Vocabulary) {
    put_u32(buf, vocab.len() as u32);
    for t in vocab.tokens() {
        put_str(buf, t);
    }
}

fn put_config(buf: &mut Vec<u8>, c: &ModelConfig) {
    put_u64(buf, c.hidden_size as u64);
    put_u64(buf, c.num_layers as u64);
    buf.extend_from_slice(&c.dropout.to_le_bytes());
    buf.extend_from_slice(&c.learning_rate.to_le_bytes());
    put_u64(buf, c.batch_size as u64);
    put_u64(buf, c.src_vocab_size as u64);
    put_u64(buf, c.tgt_vocab_size as u64);
    put_u64(buf, c.max_decode_length as u64);
    buf.push(c.input_feeding as u8);
    buf.extend_from_slice(&c.clip_norm.to_le_bytes());
    put_u64(buf, c.seed);
}

/// Serializes a checkpoint to bytes.
pub fn checkpoint_bytes(c: &Checkpoint) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 * c.params.num_elements() + 4096);
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    put_config(&mut buf, &c.config);
    put_u64(&mut buf, c.step);
    put_vocab(&mut buf, &c.src_vocab);
    put_vocab(&mut buf, &c.tgt_vocab);
    let groups = [(&c.params, ""), (&c.first_moment, ".m"), (&c.second_moment, ".v")];
    let count: usize = groups.iter().map(|(p, _)| p.tensors().len()).sum();
    put_u32(&mut buf, count as u32);
    for (params, suffix) in groups {
        for (name, t) in params.tensors() {
            put_str(&mut buf, &format!("{name}{suffix}"));
            put_u64(&mut buf, t.rows() as u64);
            put_u64(&mut buf, t.cols() as u64);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    buf
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(checkpoint)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
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
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("invalid UTF-8 string".into()))
    }

    fn vocab(&mut self) -> Result<Vocabulary> {
        let n = self.u32()? as usize;
        let tokens = (0..n).map(|_| self.string()).collect::<Result<Vec<_>>>()?;
        Vocabulary::from_tokens(tokens).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }

    fn config(&mut self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            hidden_size: self.usize()?,
            num_layers: self.usize()?,
            dropout: self.f64()?,
            learning_rate: self.f64()?,
            batch_size: self.usize()?,
            src_vocab_size: self.usize()?,
            tgt_vocab_size: self.usize()?,
            max_decode_length: self.usize()?,
            input_feeding: self.u8()? != 0,
            clip_norm: self.f64()?,
            seed: self.u64()?,
        })
    }
}

/// Parses bytes produced by [`checkpoint_bytes`].
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let config = r.config()?;
    config
        .validate()
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let step = r.u64()?;
    let src_vocab = r.vocab()?;
    let tgt_vocab = r.vocab()?;
    if src_vocab.len() != config.src_vocab_size || tgt_vocab.len() != config.tgt_vocab_size {
        return Err(Error::CorruptCheckpoint("vocabulary size disagrees with config".into()));
    }
    let count = r.u32()? as usize;
    let mut tensors = HashMap::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rows = r.usize()?;
        let cols = r.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?;
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if tensors.insert(name.clone(), Matrix::from_vec(rows, cols, data)).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    let mut fill = |suffix: &str| -> Result<ModelParams<f32>> {
        let mut p = ModelParams::zeros(&config);
        for (name, slot) in p.tensors_mut() {
            let key = format!("{name}{suffix}");
            let t = tensors
                .remove(&key)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::CorruptCheckpoint(format!("tensor {key} has wrong shape")));
            }
            *slot = t;
        }
        Ok(p)
    };
    let params = fill("")?;
    let first_moment = fill(".m")?;
    let second_moment = fill(".v")?;
    if let Some(name) = tensors.keys().next() {
        return Err(Error::CorruptCheckpoint(format!("unexpected tensor {name}")));
    }
    Ok(Checkpoint {
        params,
        first_moment,
        second_moment,
        step,
        src_vocab,
        tgt_vocab,
        config,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
