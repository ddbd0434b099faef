//! Forward and backward passes of the attentional LSTM encoder-decoder.
//!
//! Encoder: stacked unidirectional LSTMs over source embeddings; the top
//! layer states are the annotations. Padded positions carry the previous
//! state forward, so each row's final state is the state at its last real
//! token.
//!
//! Decoder step `i`:
//! ```text
//! x0      = [embed(y_{i-1}); a_{i-1}]          (input feeding)
//! s_i     = LSTM stack(x0)
//! e_ij    = s_i W_attn h_j,  alpha_i = softmax over valid j
//! c_i     = sum_j alpha_ij h_j
//! a_i     = tanh([c_i; s_i] W_combine)
//! logits  = a_i W_output^T
//! ```
//! Dropout (inverted) touches only non-recurrent connections: embeddings,
//! inputs of upper layers and the attentional vector before projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::params::{LstmWeights, ModelParams};
use super::tensor::{gemm_nn, gemm_nt, gemm_tn_acc, sigmoid, Matrix, Real};
use crate::{Error, Result};

/// Inverted-dropout mask source.
#[derive(Debug)]
pub(crate) struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub(crate) fn new(p: f64, seed: u64) -> Option<Self> {
        (p > 0.0).then(|| Dropout {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn mask<F: Real>(&mut self, rows: usize, cols: usize) -> Matrix<F> {
        let keep = F::of(1.0 / (1.0 - self.p));
        let mut m = Matrix::zeros(rows, cols);
        for x in m.data_mut() {
            if self.rng.random::<f64>() >= self.p {
                *x = keep;
            }
        }
        m
    }
}

fn maybe_mask<F: Real>(dropout: &mut Option<Dropout>, rows: usize, cols: usize) -> Option<Matrix<F>> {
    dropout.as_mut().map(|d| d.mask(rows, cols))
}

#[derive(Debug, Clone)]
struct CellCache<F> {
    x: Matrix<F>,
    h_prev: Matrix<F>,
    c_prev: Matrix<F>,
    /// Activated gates `[i | f | g | o]`.
    gates: Matrix<F>,
    tanh_c: Matrix<F>,
}

/// One LSTM step. Rows with `valid[r] == false` keep their previous state.
fn lstm_cell<F: Real>(
    w: &LstmWeights<F>,
    x: Matrix<F>,
    h_prev: &Matrix<F>,
    c_prev: &Matrix<F>,
    valid: Option<&[bool]>,
) -> (CellCache<F>, Matrix<F>, Matrix<F>) {
    let rows = x.rows();
    let h = w.hidden_size();
    let mut gates = Matrix::zeros(rows, 4 * h);
    for r in 0..rows {
        gates.row_mut(r).copy_from_slice(w.bias.row(0));
    }
    gemm_nn(&x, &w.w_input, &mut gates, F::one());
    gemm_nn(h_prev, &w.w_recurrent, &mut gates, F::one());

    let mut h_new = Matrix::zeros(rows, h);
    let mut c_new = Matrix::zeros(rows, h);
    let mut tanh_c = Matrix::zeros(rows, h);
    for r in 0..rows {
        let keep = valid.is_none_or(|v| v[r]);
        let g = gates.row_mut(r);
        for k in 0..h {
            g[k] = sigmoid(g[k]);
            g[h + k] = sigmoid(g[h + k]);
            g[2 * h + k] = g[2 * h + k].tanh();
            g[3 * h + k] = sigmoid(g[3 * h + k]);
        }
        let cp = c_prev.row(r);
        let hp = h_prev.row(r);
        let (hn, cn, tc) = (h_new.row_mut(r), c_new.row_mut(r), tanh_c.row_mut(r));
        for k in 0..h {
            let c = g[h + k] * cp[k] + g[k] * g[2 * h + k];
            let t = c.tanh();
            tc[k] = t;
            if keep {
                cn[k] = c;
                hn[k] = g[3 * h + k] * t;
            } else {
                cn[k] = cp[k];
                hn[k] = hp[k];
            }
        }
    }
    let cache = CellCache {
        x,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gates,
        tanh_c,
    };
    (cache, h_new, c_new)
}

/// Back-propagates through one (masked) LSTM step.
///
/// `dh`/`dc` are gradients w.r.t. the step's outputs; returns gradients
/// w.r.t. its input and previous state, accumulating weight gradients.
fn lstm_cell_backward<F: Real>(
    w: &LstmWeights<F>,
    cache: &CellCache<F>,
    valid: Option<&[bool]>,
    dh: &Matrix<F>,
    dc: &Matrix<F>,
    grads: &mut LstmWeights<F>,
) -> (Matrix<F>, Matrix<F>, Matrix<F>) {
    let rows = dh.rows();
    let h = w.hidden_size();
    let one = F::one();
    let mut dz = Matrix::zeros(rows, 4 * h);
    let mut dc_prev = Matrix::zeros(rows, h);
    for r in 0..rows {
        let keep = valid.is_none_or(|v| v[r]);
        let dcp = dc_prev.row_mut(r);
        if !keep {
            dcp.copy_from_slice(dc.row(r));
            continue;
        }
        let g = cache.gates.row(r);
        let tc = cache.tanh_c.row(r);
        let cp = cache.c_prev.row(r);
        let (dhr, dcr) = (dh.row(r), dc.row(r));
        let dzr = dz.row_mut(r);
        for k in 0..h {
            let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
            let d_o = dhr[k] * tc[k];
            let dcn = dcr[k] + dhr[k] * o * (one - tc[k] * tc[k]);
            dcp[k] = dcn * f;
            dzr[k] = dcn * gg * i * (one - i);
            dzr[h + k] = dcn * cp[k] * f * (one - f);
            dzr[2 * h + k] = dcn * i * (one - gg * gg);
            dzr[3 * h + k] = d_o * o * (one - o);
        }
    }
    gemm_tn_acc(&cache.x, &dz, &mut grads.w_input);
    gemm_tn_acc(&cache.h_prev, &dz, &mut grads.w_recurrent);
    {
        let bias = grads.bias.row_mut(0);
        for r in 0..rows {
            for (b, &d) in bias.iter_mut().zip(dz.row(r)) {
                *b += d;
            }
        }
    }
    let mut dx = Matrix::zeros(rows, cache.x.cols());
    gemm_nt(&dz, &w.w_input, &mut dx, F::zero());
    let mut dh_prev = Matrix::zeros(rows, h);
    gemm_nt(&dz, &w.w_recurrent, &mut dh_prev, F::zero());
    if let Some(v) = valid {
        for r in (0..rows).filter(|&r| !v[r]) {
            dh_prev.row_mut(r).copy_from_slice(dh.row(r));
        }
    }
    (dx, dh_prev, dc_prev)
}

/// Encoder annotations and final states for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<F> {
    /// One `[batch, H]` matrix per source position.
    pub annotations: Vec<Matrix<F>>,
    /// `valid[t][b]`: whether position `t` is a real token of row `b`.
    pub valid: Vec<Vec<bool>>,
    /// `(h, c)` per layer at each row's last real token.
    pub final_states: Vec<(Matrix<F>, Matrix<F>)>,
}

impl<F: Real> EncoderOutput<F> {
    pub fn batch_size(&self) -> usize {
        self.final_states[0].0.rows()
    }

    pub fn src_len(&self) -> usize {
        self.annotations.len()
    }

    pub fn annotation(&self, b: usize, t: usize) -> &[F] {
        self.annotations[t].row(b)
    }
}

#[derive(Debug)]
struct EncoderCache<F> {
    /// `[t][layer]`
    cells: Vec<Vec<CellCache<F>>>,
    /// Dropout masks on each layer's input, `[t][layer]`.
    input_masks: Vec<Vec<Option<Matrix<F>>>>,
}

fn check_ids(ids: &[u32], vocab_size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::IdOutOfRange { id, vocab_size }),
        None => Ok(()),
    }
}

fn encode_impl<F: Real>(
    params: &ModelParams<F>,
    src: &[u32],
    lengths: &[usize],
    dropout: &mut Option<Dropout>,
) -> Result<(EncoderOutput<F>, EncoderCache<F>)> {
    let size = lengths.len();
    if size == 0 {
        return Err(Error::InvalidInput("empty source batch".into()));
    }
    if lengths.contains(&0) {
        return Err(Error::InvalidInput("zero-length source sequence".into()));
    }
    if src.len() % size != 0 {
        return Err(Error::Shape("source ids are not a [len, batch] grid".into()));
    }
    let src_len = src.len() / size;
    if lengths.iter().any(|&l| l > src_len) {
        return Err(Error::Shape("length exceeds padded source width".into()));
    }
    check_ids(src, params.src_vocab_size())?;

    let h = params.hidden_size();
    let layers = params.num_layers();
    let mut states: Vec<(Matrix<F>, Matrix<F>)> = (0..layers)
        .map(|_| (Matrix::zeros(size, h), Matrix::zeros(size, h)))
        .collect();
    let mut annotations = Vec::with_capacity(src_len);
    let mut valid_all = Vec::with_capacity(src_len);
    let mut cells = Vec::with_capacity(src_len);
    let mut input_masks = Vec::with_capacity(src_len);
    for t in 0..src_len {
        let valid: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
        let mut x = params.src_embed.gather_rows(&src[t * size..(t + 1) * size]);
        let mut step_cells = Vec::with_capacity(layers);
        let mut step_masks = Vec::with_capacity(layers);
        for (l, w) in params.encoder.iter().enumerate() {
            let mask = maybe_mask(dropout, size, x.cols());
            if let Some(m) = &mask {
                x.mul_assign_elementwise(m);
            }
            let (h_prev, c_prev) = &states[l];
            let (cache, h_new, c_new) = lstm_cell(w, x, h_prev, c_prev, Some(&valid));
            step_cells.push(cache);
            step_masks.push(mask);
            x = h_new.clone();
            states[l] = (h_new, c_new);
        }
        annotations.push(x);
        valid_all.push(valid);
        cells.push(step_cells);
        input_masks.push(step_masks);
    }
    let out = EncoderOutput {
        annotations,
        valid: valid_all,
        final_states: states,
    };
    Ok((out, EncoderCache { cells, input_masks }))
}

/// Runs the encoder over a padded, time-major id grid (`src[t * batch + b]`).
pub fn encode<F: Real>(
    params: &ModelParams<F>,
    src: &[u32],
    lengths: &[usize],
) -> Result<EncoderOutput<F>> {
    encode_impl(params, src, lengths, &mut None).map(|(out, _)| out)
}

/// Masked softmax attention given projected queries `q = s W_attn`.
/// Returns `(weights [batch, src_len], context [batch, H])`.
fn attention_weights<F: Real>(q: &Matrix<F>, enc: &EncoderOutput<F>) -> Result<(Matrix<F>, Matrix<F>)> {
    let size = q.rows();
    let h = q.cols();
    let len = enc.src_len();
    let mut alpha = Matrix::zeros(size, len);
    let mut context = Matrix::zeros(size, h);
    for b in 0..size {
        let qb = q.row(b);
        let a = alpha.row_mut(b);
        let mut max = F::neg_infinity();
        for (j, aj) in a.iter_mut().enumerate() {
            if enc.valid[j][b] {
                let score = qb
                    .iter()
                    .zip(enc.annotation(b, j))
                    .fold(F::zero(), |acc, (&x, &y)| acc + x * y);
                *aj = score;
                if score > max {
                    max = score;
                }
            }
        }
        if max == F::neg_infinity() {
            return Err(Error::InvalidInput(format!(
                "all source positions masked for row {b}"
            )));
        }
        let mut total = F::zero();
        for (j, aj) in a.iter_mut().enumerate() {
            if enc.valid[j][b] {
                *aj = (*aj - max).exp();
                total += *aj;
            } else {
                *aj = F::zero();
            }
        }
        let ctx = context.row_mut(b);
        for (j, aj) in a.iter_mut().enumerate() {
            if enc.valid[j][b] {
                *aj /= total;
                for (c, &hj) in ctx.iter_mut().zip(enc.annotation(b, j)) {
                    *c += *aj * hj;
                }
            }
        }
    }
    Ok((alpha, context))
}

/// Attention of decoder top states `[batch, H]` over the annotations.
/// Returns `(context [batch, H], weights [batch, src_len])`.
pub fn attend<F: Real>(
    params: &ModelParams<F>,
    decoder_top_state: &Matrix<F>,
    encoder_output: &EncoderOutput<F>,
) -> Result<(Matrix<F>, Matrix<F>)> {
    let mut q = Matrix::zeros(decoder_top_state.rows(), params.hidden_size());
    gemm_nn(decoder_top_state, &params.attn, &mut q, F::zero());
    let (alpha, context) = attention_weights(&q, encoder_output)?;
    Ok((context, alpha))
}

/// Recurrent decoder state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<F> {
    /// `(h, c)` per layer.
    pub layers: Vec<(Matrix<F>, Matrix<F>)>,
    /// Previous attentional vector (zeros before the first step).
    pub feed: Matrix<F>,
    pub step: usize,
}

impl<F: Real> DecoderState<F> {
    /// Starts from the encoder's final states.
    pub fn from_encoder(enc: &EncoderOutput<F>) -> Self {
        let (rows, h) = enc.final_states[0].0.shape();
        DecoderState {
            layers: enc.final_states.clone(),
            feed: Matrix::zeros(rows, h),
            step: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.feed.rows()
    }
}

#[derive(Debug)]
struct StepCache<F> {
    cells: Vec<CellCache<F>>,
    input_masks: Vec<Option<Matrix<F>>>,
    s_top: Matrix<F>,
    q: Matrix<F>,
    alpha: Matrix<F>,
    cat: Matrix<F>,
    attn_vec: Matrix<F>,
    out_mask: Option<Matrix<F>>,
    /// Logits, replaced by probabilities during loss computation.
    logits: Matrix<F>,
}

fn decode_step_impl<F: Real>(
    params: &ModelParams<F>,
    state: &DecoderState<F>,
    prev: &[u32],
    enc: &EncoderOutput<F>,
    dropout: &mut Option<Dropout>,
) -> Result<(StepCache<F>, DecoderState<F>)> {
    let size = state.batch_size();
    if prev.len() != size || enc.batch_size() != size {
        return Err(Error::Shape(format!(
            "decoder batch {size}, tokens {}, encoder batch {}",
            prev.len(),
            enc.batch_size()
        )));
    }
    check_ids(prev, params.tgt_vocab_size())?;
    let h = params.hidden_size();

    let mut emb = params.tgt_embed.gather_rows(prev);
    let emb_mask = maybe_mask(dropout, size, h);
    if let Some(m) = &emb_mask {
        emb.mul_assign_elementwise(m);
    }
    let mut x = if params.input_feeding() {
        Matrix::hcat(&emb, &state.feed)
    } else {
        emb
    };
    let mut cells = Vec::with_capacity(params.num_layers());
    let mut input_masks = vec![emb_mask];
    let mut layers = Vec::with_capacity(params.num_layers());
    for (l, w) in params.decoder.iter().enumerate() {
        if l > 0 {
            let mask = maybe_mask(dropout, size, h);
            if let Some(m) = &mask {
                x.mul_assign_elementwise(m);
            }
            input_masks.push(mask);
        }
        let (h_prev, c_prev) = &state.layers[l];
        let (cache, h_new, c_new) = lstm_cell(w, x, h_prev, c_prev, None);
        cells.push(cache);
        x = h_new.clone();
        layers.push((h_new, c_new));
    }
    let s_top = x;

    let mut q = Matrix::zeros(size, h);
    gemm_nn(&s_top, &params.attn, &mut q, F::zero());
    let (alpha, context) = attention_weights(&q, enc)?;
    let cat = Matrix::hcat(&context, &s_top);
    let mut attn_vec = Matrix::zeros(size, h);
    gemm_nn(&cat, &params.combine, &mut attn_vec, F::zero());
    attn_vec.data_mut().iter_mut().for_each(|v| *v = v.tanh());

    let out_mask = maybe_mask(dropout, size, h);
    let mut logits = Matrix::zeros(size, params.tgt_vocab_size());
    match &out_mask {
        Some(m) => {
            let mut dropped = attn_vec.clone();
            dropped.mul_assign_elementwise(m);
            gemm_nt(&dropped, &params.output, &mut logits, F::zero());
        }
        None => gemm_nt(&attn_vec, &params.output, &mut logits, F::zero()),
    }

    let next = DecoderState {
        layers,
        feed: attn_vec.clone(),
        step: state.step + 1,
    };
    let cache = StepCache {
        cells,
        input_masks,
        s_top,
        q,
        alpha,
        cat,
        attn_vec,
        out_mask,
        logits,
    };
    Ok((cache, next))
}

/// Advances the decoder by one token per row; returns logits over the
/// target vocabulary and the next state.
pub fn decode_step<F: Real>(
    params: &ModelParams<F>,
    state: &DecoderState<F>,
    prev_tokens: &[u32],
    encoder_output: &EncoderOutput<F>,
) -> Result<(Matrix<F>, DecoderState<F>)> {
    let (cache, next) = decode_step_impl(params, state, prev_tokens, encoder_output, &mut None)?;
    Ok((cache.logits, next))
}

/// Everything the backward pass needs from a teacher-forced forward pass.
struct ForwardPass<F> {
    enc: EncoderOutput<F>,
    enc_cache: EncoderCache<F>,
    steps: Vec<StepCache<F>>,
    loss: F,
    tokens: usize,
}

/// Converts each step's logits into probabilities in place and sums the
/// masked negative log-likelihood.
fn softmax_nll<F: Real>(logits: &mut Matrix<F>, targets: &[u32], mask: &[bool]) -> F {
    let mut nll = F::zero();
    for (b, (&y, &m)) in targets.iter().zip(mask).enumerate() {
        let row = logits.row_mut(b);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        if m {
            nll -= (row[y as usize] / total).ln();
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    nll
}

fn forward_train<F: Real>(
    params: &ModelParams<F>,
    batch: &Batch,
    dropout: &mut Option<Dropout>,
) -> Result<ForwardPass<F>> {
    check_ids(&batch.tgt_in, params.tgt_vocab_size())?;
    check_ids(&batch.tgt_out, params.tgt_vocab_size())?;
    let (enc, enc_cache) = encode_impl(params, &batch.src, &batch.src_lengths, dropout)?;
    let mut state = DecoderState::from_encoder(&enc);
    let mut steps = Vec::with_capacity(batch.tgt_steps);
    let mut nll = F::zero();
    for i in 0..batch.tgt_steps {
        let (mut cache, next) = decode_step_impl(params, &state, batch.tgt_in_at(i), &enc, dropout)?;
        nll += softmax_nll(&mut cache.logits, batch.tgt_out_at(i), batch.mask_at(i));
        steps.push(cache);
        state = next;
    }
    Ok(ForwardPass {
        enc,
        enc_cache,
        steps,
        loss: nll / F::of(batch.size as f64),
        tokens: batch.num_tokens(),
    })
}

/// Teacher-forced loss: summed token negative log-likelihood divided by the
/// number of sentences. Returns `(loss, scored token count)`.
pub fn batch_loss<F: Real>(
    params: &ModelParams<F>,
    batch: &Batch,
    dropout: Option<(f64, u64)>,
) -> Result<(F, usize)> {
    let mut dropout = dropout.and_then(|(p, seed)| Dropout::new(p, seed));
    let pass = forward_train(params, batch, &mut dropout)?;
    Ok((pass.loss, pass.tokens))
}

/// Exact gradients of [`batch_loss`] with dropout off.
pub fn gradients<F: Real>(params: &ModelParams<F>, batch: &Batch) -> Result<(F, ModelParams<F>)> {
    let (loss, _, grads) = loss_and_gradients(params, batch, None)?;
    Ok((loss, grads))
}

/// Loss, token count and gradients, optionally under dropout `(p, seed)`.
pub fn loss_and_gradients<F: Real>(
    params: &ModelParams<F>,
    batch: &Batch,
    dropout: Option<(f64, u64)>,
) -> Result<(F, usize, ModelParams<F>)> {
    let mut dropout = dropout.and_then(|(p, seed)| Dropout::new(p, seed));
    let pass = forward_train(params, batch, &mut dropout)?;
    let grads = backward(params, batch, &pass);
    Ok((pass.loss, pass.tokens, grads))
}

fn scatter_rows<F: Real>(grad: &mut Matrix<F>, ids: &[u32], rows: &Matrix<F>) {
    for (r, &id) in ids.iter().enumerate() {
        for (g, &d) in grad.row_mut(id as usize).iter_mut().zip(rows.row(r)) {
            *g += d;
        }
    }
}

fn backward<F: Real>(params: &ModelParams<F>, batch: &Batch, pass: &ForwardPass<F>) -> ModelParams<F> {
    let mut grads = params.zeros_like();
    let size = batch.size;
    let h = params.hidden_size();
    let layers = params.num_layers();
    let inv_m = F::one() / F::of(size as f64);
    let enc = &pass.enc;

    let mut d_annot: Vec<Matrix<F>> = (0..enc.src_len()).map(|_| Matrix::zeros(size, h)).collect();
    let mut dh_state: Vec<Matrix<F>> = (0..layers).map(|_| Matrix::zeros(size, h)).collect();
    let mut dc_state: Vec<Matrix<F>> = (0..layers).map(|_| Matrix::zeros(size, h)).collect();
    let mut d_feed = Matrix::zeros(size, h);

    for i in (0..batch.tgt_steps).rev() {
        let step = &pass.steps[i];
        let targets = batch.tgt_out_at(i);
        let mask = batch.mask_at(i);

        // softmax cross-entropy
        let mut dlogits = step.logits.clone();
        for (b, (&y, &m)) in targets.iter().zip(mask).enumerate() {
            let row = dlogits.row_mut(b);
            if m {
                row[y as usize] -= F::one();
                row.iter_mut().for_each(|v| *v *= inv_m);
            } else {
                row.iter_mut().for_each(|v| *v = F::zero());
            }
        }

        // output projection
        let mut out_in = step.attn_vec.clone();
        if let Some(m) = &step.out_mask {
            out_in.mul_assign_elementwise(m);
        }
        gemm_tn_acc(&dlogits, &out_in, &mut grads.output);
        let mut d_attn_vec = Matrix::zeros(size, h);
        gemm_nn(&dlogits, &params.output, &mut d_attn_vec, F::zero());
        if let Some(m) = &step.out_mask {
            d_attn_vec.mul_assign_elementwise(m);
        }
        d_attn_vec.add_assign(&d_feed);

        // a = tanh([c; s] W_combine)
        let mut du = d_attn_vec;
        for (d, &a) in du.data_mut().iter_mut().zip(step.attn_vec.data()) {
            *d *= F::one() - a * a;
        }
        gemm_tn_acc(&step.cat, &du, &mut grads.combine);
        let mut dcat = Matrix::zeros(size, 2 * h);
        gemm_nt(&du, &params.combine, &mut dcat, F::zero());
        let dctx = dcat.col_slice(0, h);
        let mut ds = dcat.col_slice(h, h);

        // attention
        let mut dq = Matrix::zeros(size, h);
        for b in 0..size {
            let alpha = step.alpha.row(b);
            let dcb = dctx.row(b);
            let mut dalpha = vec![F::zero(); enc.src_len()];
            let mut dot = F::zero();
            for j in (0..enc.src_len()).filter(|&j| enc.valid[j][b]) {
                let hj = enc.annotation(b, j);
                dalpha[j] = dcb.iter().zip(hj).fold(F::zero(), |acc, (&x, &y)| acc + x * y);
                dot += alpha[j] * dalpha[j];
                for (g, &d) in d_annot[j].row_mut(b).iter_mut().zip(dcb) {
                    *g += alpha[j] * d;
                }
            }
            let qb = step.q.row(b);
            for j in (0..enc.src_len()).filter(|&j| enc.valid[j][b]) {
                let dscore = alpha[j] * (dalpha[j] - dot);
                let hj = enc.annotation(b, j);
                for (g, &x) in dq.row_mut(b).iter_mut().zip(hj) {
                    *g += dscore * x;
                }
                for (g, &x) in d_annot[j].row_mut(b).iter_mut().zip(qb) {
                    *g += dscore * x;
                }
            }
        }
        gemm_tn_acc(&step.s_top, &dq, &mut grads.attn);
        gemm_nt(&dq, &params.attn, &mut ds, F::one());

        // decoder LSTM stack, top down
        let mut d_below = ds;
        for l in (0..layers).rev() {
            let mut dh = std::mem::replace(&mut dh_state[l], Matrix::zeros(0, 0));
            dh.add_assign(&d_below);
            let (mut dx, dh_prev, dc_prev) = lstm_cell_backward(
                &params.decoder[l],
                &step.cells[l],
                None,
                &dh,
                &dc_state[l],
                &mut grads.decoder[l],
            );
            dh_state[l] = dh_prev;
            dc_state[l] = dc_prev;
            if l > 0 {
                if let Some(m) = &step.input_masks[l] {
                    dx.mul_assign_elementwise(m);
                }
                d_below = dx;
            } else {
                let mut d_emb = dx.col_slice(0, h);
                if let Some(m) = &step.input_masks[0] {
                    d_emb.mul_assign_elementwise(m);
                }
                scatter_rows(&mut grads.tgt_embed, batch.tgt_in_at(i), &d_emb);
                d_feed = if params.input_feeding() {
                    dx.col_slice(h, h)
                } else {
                    Matrix::zeros(size, h)
                };
                d_below = Matrix::zeros(0, 0);
            }
        }
    }

    // encoder, with gradients of the decoder's initial state as the seed
    for t in (0..enc.src_len()).rev() {
        let valid = &enc.valid[t];
        let mut d_below = std::mem::replace(&mut d_annot[t], Matrix::zeros(0, 0));
        for l in (0..layers).rev() {
            let mut dh = std::mem::replace(&mut dh_state[l], Matrix::zeros(0, 0));
            dh.add_assign(&d_below);
            let (mut dx, dh_prev, dc_prev) = lstm_cell_backward(
                &params.encoder[l],
                &pass.enc_cache.cells[t][l],
                Some(valid),
                &dh,
                &dc_state[l],
                &mut grads.encoder[l],
            );
            dh_state[l] = dh_prev;
            dc_state[l] = dc_prev;
            if let Some(m) = &pass.enc_cache.input_masks[t][l] {
                dx.mul_assign_elementwise(m);
            }
            if l > 0 {
                d_below = dx;
            } else {
                scatter_rows(&mut grads.src_embed, batch.src_at(t), &dx);
                d_below = Matrix::zeros(0, 0);
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{init_model, IdPair, ModelConfig};
    use crate::text::{Vocabulary, SPECIALS};

    fn config(hidden: usize, vocab: usize, feeding: bool, seed: u64) -> ModelConfig {
        ModelConfig {
            hidden_size: hidden,
            src_vocab_size: vocab,
            tgt_vocab_size: vocab,
            input_feeding: feeding,
            seed,
            ..ModelConfig::default()
        }
    }

    fn random_params(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParams<f64> {
        let mut p = ModelParams::<f64>::zeros(cfg);
        for (_, t) in p.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        p
    }

    fn random_pairs(rng: &mut ChaCha8Rng, vocab: u32, n: usize, max_len: usize) -> Vec<IdPair> {
        let first = SPECIALS.len() as u32;
        (0..n)
            .map(|_| {
                let mut side = || -> Vec<u32> {
                    let len = rng.random_range(1..=max_len);
                    (0..len).map(|_| rng.random_range(first..vocab)).collect()
                };
                let src = side();
                IdPair::new(src, &side())
            })
            .collect()
    }

    fn batch_of(pairs: &[IdPair]) -> Batch {
        Batch::new(&pairs.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut worst = 0.0f64;
        for seed in 0..24u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = config(4, 7, seed % 4 != 3, seed);
            let params = random_params(&cfg, &mut rng);
            let pairs = random_pairs(&mut rng, 7, 2 + (seed as usize % 2), 3);
            let batch = batch_of(&pairs);
            let (_, grads) = gradients(&params, &batch).unwrap();
            let h = 1e-3;
            let names = params.names();
            for (t, name) in names.iter().enumerate() {
                let len = params.tensors()[t].1.data().len();
                for e in 0..len {
                    let central = |step: f64| {
                        let mut plus = params.clone();
                        plus.tensors_mut()[t].1.data_mut()[e] += step;
                        let mut minus = params.clone();
                        minus.tensors_mut()[t].1.data_mut()[e] -= step;
                        let lp = batch_loss(&plus, &batch, None).unwrap().0;
                        let lm = batch_loss(&minus, &batch, None).unwrap().0;
                        (lp - lm) / (2.0 * step)
                    };
                    // Richardson extrapolation cancels the O(h^2) term
                    let numeric = (4.0 * central(h / 2.0) - central(h)) / 3.0;
                    let analytic = grads.tensors()[t].1.data()[e];
                    let scale = analytic.abs().max(numeric.abs());
                    if scale < 1e-8 {
                        assert!((analytic - numeric).abs() < 1e-11, "{name}[{e}] seed {seed}");
                        continue;
                    }
                    let rel = (analytic - numeric).abs() / scale;
                    worst = worst.max(rel);
                    assert!(rel < 1e-4, "{name}[{e}] seed {seed}: {analytic} vs {numeric}");
                }
            }
        }
        assert!(worst < 1e-4);
    }

    #[test]
    fn attention_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = config(6, 9, true, 5);
        let params = ModelParams::<f64>::init(&cfg).unwrap();
        let src = vec![5, 6, 7, 8, 5, 0, 6, 0, 0, 7, 0, 0];
        assert!(matches!(encode(&params, &src, &[5, 2, 1]), Err(Error::Shape(_))));
        let enc = encode(&params, &src, &[3, 2, 1]).unwrap();
        assert_eq!(enc.src_len(), 4);
        for _ in 0..20 {
            let mut s = Matrix::zeros(3, 6);
            s.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-3.0..3.0));
            let (ctx, w) = attend(&params, &s, &enc).unwrap();
            assert_eq!(ctx.shape(), (3, 6));
            for (b, valid) in [3, 2, 1].into_iter().enumerate() {
                let row = w.row(b);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&x| x >= 0.0));
                assert!(row[valid..].iter().all(|&x| x == 0.0));
            }
            // single valid position: weight 1 and context equals the annotation
            assert_eq!(w.row(2)[0], 1.0);
            assert_eq!(ctx.row(2), enc.annotation(2, 0));
        }
        // uniform scores when W_attn is zero
        let mut flat = params.clone();
        flat.attn.fill(0.0);
        let (_, w) = attend(&flat, &Matrix::zeros(3, 6), &enc).unwrap();
        assert!(w.row(0)[..3].iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn encoder_shapes_and_rejections() {
        let params = ModelParams::<f32>::init(&config(8, 10, true, 1)).unwrap();
        let enc = encode(&params, &[5, 6, 7, 8, 9], &[5]).unwrap();
        assert_eq!(enc.annotations.len(), 5);
        assert_eq!(enc.annotation(0, 4).len(), 8);
        let twin = encode(&params, &[5, 5, 6, 6, 7, 7], &[3, 3]).unwrap();
        for t in 0..3 {
            assert_eq!(twin.annotation(0, t), twin.annotation(1, t));
        }
        assert!(encode(&params, &[5, 6], &[0]).is_err());
        assert!(matches!(
            encode(&params, &[5, 10], &[2]),
            Err(Error::IdOutOfRange { id: 10, .. })
        ));
    }

    #[test]
    fn decode_step_contract() {
        let params = ModelParams::<f32>::init(&config(8, 10, true, 2)).unwrap();
        let enc = encode(&params, &[5, 6, 7, 6, 0, 0], &[3, 1]).unwrap();
        let state = DecoderState::from_encoder(&enc);
        let (a, s1) = decode_step(&params, &state, &[1, 1], &enc).unwrap();
        let (b, s2) = decode_step(&params, &state, &[1, 1], &enc).unwrap();
        assert_eq!(a.shape(), (2, 10));
        assert_eq!(a, b);
        assert_eq!(s1, s2);
        assert_eq!(s1.step, 1);
        assert!(decode_step(&params, &state, &[1, 12], &enc).is_err());

        // padded annotation of row 1 is unreachable
        let mut altered = enc.clone();
        altered.annotations[2].row_mut(1).fill(42.0);
        let (c, _) = decode_step(&params, &state, &[1, 1], &altered).unwrap();
        assert_eq!(a.row(1), c.row(1));
    }

    #[test]
    fn uniform_output_gives_log_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = config(5, 11, true, 8);
        let mut params = ModelParams::<f64>::init(&cfg).unwrap();
        params.output.fill(0.0);
        let pairs = random_pairs(&mut rng, 11, 4, 5);
        let batch = batch_of(&pairs);
        let (loss, tokens) = batch_loss(&params, &batch, None).unwrap();
        let per_token = loss * batch.size as f64 / tokens as f64;
        assert!((per_token - (11f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn loss_is_a_mean_over_sentences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::<f64>::init(&config(4, 9, true, 3)).unwrap();
        let pair = random_pairs(&mut rng, 9, 1, 4).pop().unwrap();
        let one = batch_of(std::slice::from_ref(&pair));
        let two = batch_of(&[pair.clone(), pair]);
        let (l1, g1) = gradients(&params, &one).unwrap();
        let (l2, g2) = gradients(&params, &two).unwrap();
        assert!(l1 >= 0.0);
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unused_embedding_rows_get_no_gradient() {
        let params = ModelParams::<f64>::init(&config(4, 9, true, 4)).unwrap();
        let batch = batch_of(&[IdPair::new(vec![5, 6], &[7, 5])]);
        let (_, g) = gradients(&params, &batch).unwrap();
        for id in [0, 2, 3, 4, 7, 8] {
            assert!(g.src_embed.row(id).iter().all(|&x| x == 0.0), "src row {id}");
        }
        for id in [0, 2, 3, 4, 6, 8] {
            assert!(g.tgt_embed.row(id).iter().all(|&x| x == 0.0), "tgt row {id}");
        }
        assert!(g.src_embed.row(5).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn dropout_is_seeded_and_changes_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::<f32>::init(&config(8, 12, true, 1)).unwrap();
        let batch = batch_of(&random_pairs(&mut rng, 12, 6, 5));
        let plain = batch_loss(&params, &batch, None).unwrap().0;
        let a = batch_loss(&params, &batch, Some((0.3, 7))).unwrap().0;
        let b = batch_loss(&params, &batch, Some((0.3, 7))).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, plain);
        assert_eq!(batch_loss(&params, &batch, Some((0.0, 7))).unwrap().0, plain);
    }

    #[test]
    fn memorizes_sixteen_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let src_vocab = Vocabulary::from_tokens(
            SPECIALS.iter().map(|s| s.to_string()).chain((0..10).map(|i| format!("s{i}"))).collect(),
        )
        .unwrap();
        let tgt_vocab = Vocabulary::from_tokens(
            SPECIALS.iter().map(|s| s.to_string()).chain((0..10).map(|i| format!("t{i}"))).collect(),
        )
        .unwrap();
        let cfg = ModelConfig {
            hidden_size: 32,
            learning_rate: 0.01,
            dropout: 0.0,
            seed: 12,
            ..ModelConfig::default()
        };
        let mut ckpt = init_model(&cfg, &src_vocab, &tgt_vocab).unwrap();
        let batch = batch_of(&random_pairs(&mut rng, 15, 16, 5));
        let initial = batch_loss(&ckpt.params, &batch, None).unwrap().0;
        let mut last = initial;
        for _ in 0..200 {
            let (loss, _, grads) = loss_and_gradients(&ckpt.params, &batch, None).unwrap();
            last = loss;
            ckpt.apply_adam(&grads).unwrap();
        }
        assert!(last < 0.1 * initial, "{initial} -> {last}");
    }
}
