use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tensor::{Matrix, Real};
use crate::{Error, Result};

pub const INIT_RANGE: f64 = 0.1;

/// One LSTM layer; gate blocks are laid out as `[input | forget | cell | output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<F> {
    /// `[input_size, 4H]`
    pub w_input: Matrix<F>,
    /// `[H, 4H]`
    pub w_recurrent: Matrix<F>,
    /// `[1, 4H]`
    pub bias: Matrix<F>,
}

/// Every trainable tensor of the translator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    /// `[src_vocab, H]`
    pub src_embed: Matrix<F>,
    /// `[tgt_vocab, H]`
    pub tgt_embed: Matrix<F>,
    pub encoder: Vec<LstmWeights<F>>,
    pub decoder: Vec<LstmWeights<F>>,
    /// Bilinear attention scores `s W h`, `[H, H]`.
    pub attn: Matrix<F>,
    /// Attentional combination `tanh([c; s] W)`, `[2H, H]`.
    pub combine: Matrix<F>,
    /// Output projection, `[tgt_vocab, H]`.
    pub output: Matrix<F>,
}

impl<F: Real> LstmWeights<F> {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_input: Matrix::zeros(input, 4 * hidden),
            w_recurrent: Matrix::zeros(hidden, 4 * hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_recurrent.rows()
    }
}

pub(crate) fn fill_uniform<F: Real, R: Rng>(m: &mut Matrix<F>, rng: &mut R) {
    for x in m.data_mut() {
        *x = F::of(rng.random_range(-INIT_RANGE..=INIT_RANGE));
    }
}

impl<F: Real> ModelParams<F> {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_size;
        let encoder = (0..config.num_layers)
            .map(|_| LstmWeights::zeros(h, h))
            .collect();
        let decoder = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.decoder_input_size() } else { h };
                LstmWeights::zeros(input, h)
            })
            .collect();
        ModelParams {
            src_embed: Matrix::zeros(config.src_vocab_size, h),
            tgt_embed: Matrix::zeros(config.tgt_vocab_size, h),
            encoder,
            decoder,
            attn: Matrix::zeros(h, h),
            combine: Matrix::zeros(2 * h, h),
            output: Matrix::zeros(config.tgt_vocab_size, h),
        }
    }

    /// Uniform `[-0.1, 0.1]` weights and zero biases from a seeded stream.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (name, t) in params.tensors_mut() {
            if !name.ends_with(".bias") {
                fill_uniform(t, &mut rng);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|m| Matrix::zeros(m.rows(), m.cols()))
    }

    pub fn map<G: Real>(&self, f: impl Fn(&Matrix<F>) -> Matrix<G>) -> ModelParams<G> {
        let lstm = |w: &LstmWeights<F>| LstmWeights {
            w_input: f(&w.w_input),
            w_recurrent: f(&w.w_recurrent),
            bias: f(&w.bias),
        };
        ModelParams {
            src_embed: f(&self.src_embed),
            tgt_embed: f(&self.tgt_embed),
            encoder: self.encoder.iter().map(lstm).collect(),
            decoder: self.decoder.iter().map(lstm).collect(),
            attn: f(&self.attn),
            combine: f(&self.combine),
            output: f(&self.output),
        }
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        self.map(Matrix::cast)
    }

    pub fn hidden_size(&self) -> usize {
        self.attn.rows()
    }

    pub fn num_layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn src_vocab_size(&self) -> usize {
        self.src_embed.rows()
    }

    pub fn tgt_vocab_size(&self) -> usize {
        self.output.rows()
    }

    pub fn input_feeding(&self) -> bool {
        self.decoder[0].w_input.rows() == 2 * self.hidden_size()
    }

    /// Tensor names in canonical order.
    pub fn names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix<F>)> {
        let mut out = vec![
            ("src_embed".to_owned(), &self.src_embed),
            ("tgt_embed".to_owned(), &self.tgt_embed),
        ];
        for (side, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, w) in layers.iter().enumerate() {
                out.push((format!("{side}.{l}.w_input"), &w.w_input));
                out.push((format!("{side}.{l}.w_recurrent"), &w.w_recurrent));
                out.push((format!("{side}.{l}.bias"), &w.bias));
            }
        }
        out.push(("attn".to_owned(), &self.attn));
        out.push(("combine".to_owned(), &self.combine));
        out.push(("output".to_owned(), &self.output));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<F>)> {
        let mut out = vec![
            ("src_embed".to_owned(), &mut self.src_embed),
            ("tgt_embed".to_owned(), &mut self.tgt_embed),
        ];
        for (side, layers) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (l, w) in layers.iter_mut().enumerate() {
                out.push((format!("{side}.{l}.w_input"), &mut w.w_input));
                out.push((format!("{side}.{l}.w_recurrent"), &mut w.w_recurrent));
                out.push((format!("{side}.{l}.bias"), &mut w.bias));
            }
        }
        out.push(("attn".to_owned(), &mut self.attn));
        out.push(("combine".to_owned(), &mut self.combine));
        out.push(("output".to_owned(), &mut self.output));
        out
    }

    pub fn num_elements(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn global_norm(&self) -> F {
        self.tensors()
            .iter()
            .fold(F::zero(), |acc, (_, t)| acc + t.sum_sq())
            .sqrt()
    }

    pub fn scale(&mut self, s: F) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    /// Errors unless `other` has the same tensor names and shapes.
    pub fn check_same_shape<G: Real>(&self, other: &ModelParams<G>) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "{} tensors vs {} tensors",
                a.len(),
                b.len()
            )));
        }
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::Shape(format!(
                    "{na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ModelConfig {
        ModelConfig {
            hidden_size: 8,
            src_vocab_size: 20,
            tgt_vocab_size: 20,
            seed,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn shapes_follow_config() {
        let p = ModelParams::<f32>::init(&cfg(1)).unwrap();
        assert_eq!(p.src_embed.shape(), (20, 8));
        assert_eq!(p.decoder[0].w_input.shape(), (16, 32));
        assert_eq!(p.encoder[1].w_input.shape(), (8, 32));
        assert_eq!(p.combine.shape(), (16, 8));
        assert!(p.input_feeding());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = ModelParams::<f32>::init(&cfg(3)).unwrap();
        let b = ModelParams::<f32>::init(&cfg(3)).unwrap();
        let c = ModelParams::<f32>::init(&cfg(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (name, t) in a.tensors() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&x| x == 0.0));
            } else {
                assert!(t.data().iter().all(|&x| x.abs() <= 0.1));
                assert!(t.data().iter().any(|&x| x != 0.0));
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg(1);
        c.dropout = 1.0;
        assert!(ModelParams::<f32>::init(&c).is_err());
        c.dropout = 0.0;
        c.hidden_size = 0;
        assert!(ModelParams::<f32>::init(&c).is_err());
    }
}
