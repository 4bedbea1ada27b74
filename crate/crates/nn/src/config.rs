use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// Shape and regularisation hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_positions: usize,
    /// First position id. RoBERTa checkpoints reserve `pad_token_id + 1` slots.
    pub position_offset: usize,
    pub layer_norm_eps: f64,
    pub hidden_dropout: f64,
    pub attention_dropout: f64,
    pub initializer_range: f64,
    pub num_labels: usize,
}

impl EncoderConfig {
    /// Two-layer, two-head encoder small enough for CPU unit tests.
    pub fn tiny(vocab_size: usize, num_labels: usize) -> Self {
        Self {
            vocab_size,
            hidden_size: 16,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 32,
            max_positions: 130,
            position_offset: 0,
            layer_norm_eps: 1e-12,
            hidden_dropout: 0.1,
            attention_dropout: 0.1,
            initializer_range: 0.1,
            num_labels,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    /// Longest token sequence the position table can index.
    pub fn max_sequence_len(&self) -> usize {
        self.max_positions.saturating_sub(self.position_offset)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(NnError::Config(msg));
        if self.vocab_size == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return fail("vocab_size, hidden_size and num_layers must be positive".into());
        }
        if self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return fail(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.num_labels < 2 {
            return fail(format!("num_labels must be >= 2, got {}", self.num_labels));
        }
        if self.max_sequence_len() < 2 {
            return fail("position table too small for a two-token sequence".into());
        }
        for (name, p) in [
            ("hidden_dropout", self.hidden_dropout),
            ("attention_dropout", self.attention_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} must lie in [0, 1), got {p}"));
            }
        }
        Ok(())
    }
}
