use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Model shape and optimizer hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub max_decode_length: usize,
    /// Feed the previous attentional vector into the first decoder layer.
    pub input_feeding: bool,
    /// Global gradient-norm clipping threshold; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        ModelConfig {
            hidden_size: 64,
            num_layers: 2,
            dropout: 0.1,
            learning_rate: 0.002,
            batch_size: 64,
            src_vocab_size: 0,
            tgt_vocab_size: 0,
            max_decode_length: 50,
            input_feeding: true,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// The 2x512 LSTM configuration with the published optimizer settings.
    pub fn full_scale(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        ModelConfig {
            hidden_size: 512,
            num_layers: 2,
            dropout: 0.3,
            learning_rate: 0.0002,
            batch_size: 64,
            src_vocab_size,
            tgt_vocab_size,
            max_decode_length: 250,
            input_feeding: true,
            clip_norm: 5.0,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("batch_size", self.batch_size),
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
            ("max_decode_length", self.max_decode_length),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("clip_norm must be non-negative"));
        }
        Ok(())
    }

    /// Width of the first decoder layer's input.
    pub(crate) fn decoder_input_size(&self) -> usize {
        if self.input_feeding {
            2 * self.hidden_size
        } else {
            self.hidden_size
        }
    }
}
