use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Batch, IdPair};
use crate::text::{BpeModel, ParallelCorpus, Vocabulary};
use crate::{Error, Result};

/// Segments and id-maps every pair of an already oriented corpus.
pub fn encode_pairs(
    corpus: &ParallelCorpus,
    src_bpe: &BpeModel,
    tgt_bpe: &BpeModel,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Vec<IdPair> {
    let sources = src_bpe.apply_all(corpus.sources());
    let targets = tgt_bpe.apply_all(corpus.targets());
    sources
        .iter()
        .zip(&targets)
        .map(|(s, t)| IdPair::new(src_vocab.encode(s), &tgt_vocab.encode(t)))
        .collect()
}

/// One epoch of padded batches: a seeded shuffle, a stable sort by source
/// length so rows of similar length share a batch, then a shuffle of the
/// batch order.
pub fn make_batches(pairs: &[IdPair], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus("no training pairs to batch".into()));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| pairs[i].src.len());
    let mut batches = order
        .chunks(batch_size)
        .map(|chunk| Batch::new(&chunk.iter().map(|&i| &pairs[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    batches.shuffle(&mut rng);
    Ok(batches)
}
