use crate::text::Vocabulary;
use crate::{Error, Result};

/// An id-encoded training pair. `tgt` is wrapped in `<s> ... </s>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IdPair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl IdPair {
    /// Wraps a bare target id sequence in `<s> ... </s>`.
    pub fn new(src: Vec<u32>, target: &[u32]) -> Self {
        let mut tgt = Vec::with_capacity(target.len() + 2);
        tgt.push(Vocabulary::BOS_ID);
        tgt.extend_from_slice(target);
        tgt.push(Vocabulary::EOS_ID);
        IdPair { src, tgt }
    }
}

/// A padded, time-major batch with its target loss mask.
///
/// Position `t` of row `b` lives at index `t * size + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub src: Vec<u32>,
    pub src_lengths: Vec<usize>,
    /// Number of decoder steps (longest target minus one).
    pub tgt_steps: usize,
    pub tgt_in: Vec<u32>,
    pub tgt_out: Vec<u32>,
    pub tgt_mask: Vec<bool>,
}

impl Batch {
    pub fn new(pairs: &[&IdPair]) -> Result<Batch> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if let Some(p) = pairs.iter().find(|p| p.src.is_empty()) {
            return Err(Error::InvalidInput(format!(
                "zero-length source in batch (target {:?})",
                p.tgt
            )));
        }
        if pairs.iter().any(|p| p.tgt.len() < 2) {
            return Err(Error::InvalidInput(
                "targets must be wrapped in <s> ... </s>".into(),
            ));
        }
        let size = pairs.len();
        let src_len = pairs.iter().map(|p| p.src.len()).max().unwrap_or(0);
        let tgt_steps = pairs.iter().map(|p| p.tgt.len() - 1).max().unwrap_or(0);
        let pad = Vocabulary::BLANK_ID;
        let mut src = vec![pad; src_len * size];
        let mut tgt_in = vec![pad; tgt_steps * size];
        let mut tgt_out = vec![pad; tgt_steps * size];
        let mut tgt_mask = vec![false; tgt_steps * size];
        for (b, p) in pairs.iter().enumerate() {
            for (t, &id) in p.src.iter().enumerate() {
                src[t * size + b] = id;
            }
            for t in 0..p.tgt.len() - 1 {
                tgt_in[t * size + b] = p.tgt[t];
                tgt_out[t * size + b] = p.tgt[t + 1];
                tgt_mask[t * size + b] = true;
            }
        }
        Ok(Batch {
            size,
            src_len,
            src,
            src_lengths: pairs.iter().map(|p| p.src.len()).collect(),
            tgt_steps,
            tgt_in,
            tgt_out,
            tgt_mask,
        })
    }

    pub fn src_at(&self, t: usize) -> &[u32] {
        &self.src[t * self.size..(t + 1) * self.size]
    }

    pub fn tgt_in_at(&self, t: usize) -> &[u32] {
        &self.tgt_in[t * self.size..(t + 1) * self.size]
    }

    pub fn tgt_out_at(&self, t: usize) -> &[u32] {
        &self.tgt_out[t * self.size..(t + 1) * self.size]
    }

    pub fn mask_at(&self, t: usize) -> &[bool] {
        &self.tgt_mask[t * self.size..(t + 1) * self.size]
    }

    /// Number of scored target tokens.
    pub fn num_tokens(&self) -> usize {
        self.tgt_mask.iter().filter(|&&m| m).count()
    }

    /// Whether no row needs padding.
    pub fn is_padding_free(&self) -> bool {
        self.src_lengths.iter().all(|&l| l == self.src_len) && self.tgt_mask.iter().all(|&m| m)
    }
}
