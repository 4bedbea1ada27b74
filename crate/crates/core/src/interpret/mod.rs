//! Last-layer CLS attention extraction and model-versus-model comparison.

mod attention;
mod compare;

pub use attention::{
    average_heads, entropy, extract_cls_attention, extract_cls_attention_at, mass_partition, word_level,
    AttentionRecord, MassPartition,
};
pub use compare::{
    aligned_rows, context_contrast_report, select_disagreements, write_context_contrast, write_disagreement_report,
    ContextContrast, DisagreementCase, CORRELATIONAL_DISCLAIMER,
};

use thiserror::Error;

use crate::preprocess::PreprocessError;
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("layer {layer} requested but the encoder has {layers}")]
    Layer { layer: usize, layers: usize },
    #[error("attention record has no heads")]
    NoHeads,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
