//! Pro to Anti counterfactual generation, quality filtering and dose mixing.

mod client;
mod filter;
mod prompt;
mod run;

pub use client::{
    AnthropicClient, GenerationClient, GenerationError, GenerationRequest, GenerationResponse, MaskingClient,
    StubClient, StubReply, API_KEY_ENV, BASE_URL_ENV,
};
pub use filter::{
    quality_verdict, quality_verdict_with, token_overlap, word_count, FilterThresholds, FilterVerdict, RejectionRule,
};
pub use prompt::{build_flip_prompt, FlipPrompt, GenerationConfig, USER_COMMENT_LABEL};
pub use run::{
    check_no_leakage, dose_count, generate_flip, mix_dose, run_augmentation, AuditLog, AuditRecord, AugmentConfig,
    AugmentationOutcome, AugmentationSummary, SyntheticSample,
};

use thiserror::Error;

use crate::corpus::{CorpusError, StanceLabel};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("comment {comment_id} is {label}, only Pro comments can be flipped")]
    NotPro { comment_id: String, label: StanceLabel },
    #[error("comment {0} has empty text")]
    EmptySource(String),
    #[error("source {0} is not a real training-split example")]
    NotTrain(String),
    #[error("unknown market `{0}`")]
    UnknownMarket(String),
    #[error("{failed} of {attempted} generation attempts failed at transport level")]
    TransportFailureRate { failed: usize, attempted: usize },
    #[error("dose {0} outside [0, 1]")]
    Dose(f64),
    #[error("sample from source {0} did not pass the quality filters")]
    NotAccepted(String),
    #[error("synthetic example {0} found outside the training split")]
    Leakage(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
