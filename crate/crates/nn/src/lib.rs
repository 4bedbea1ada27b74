//! A compact transformer encoder with a linear classification head.
//!
//! Everything runs in `f64` on the CPU with explicit forward caches and
//! hand-derived gradients, so the same code path serves both the tiny
//! randomly-initialised encoder used in tests and a full pretrained
//! RoBERTa/BERT-style checkpoint loaded from safetensors.

mod config;
mod model;
mod optim;
mod params;
mod pretrained;
mod tokenizer;

pub use config::EncoderConfig;
pub use model::{softmax, ForwardCache, Mode, SequenceClassifier};
pub use optim::{clip_grad_norm, AdamW, AdamWConfig};
pub use params::{LayerNorm, LayerParams, Linear, ModelParams};
pub use pretrained::{encoder_config_from_hf, load_params, load_pretrained, save_params, PretrainedBundle};
pub use tokenizer::{Encoding, HfTokenizer, TextTokenizer, WordTokenizer, WordTokenizerConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("tokenizer error: {0}")]
    Tokenizer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;
