//! Entity masking and market-context formatting of model inputs.

mod input;
mod mask;
mod ner;

pub use input::{build_model_input, split_context_input, InputOptions, ModelInput, COMMENT_DELIMITER, QUESTION_PREFIX};
pub use mask::{mask_bundle, mask_entities, mask_text, MaskingReport, MaskingRow, ENTITY_TOKEN};
pub use ner::{
    normalize_spans, recognize_entities, DictionaryRecognizer, EntityKind, EntitySpan, NerProvider, SpacyRecognizer,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("entity recognizer unavailable: {0}")]
    RecognizerUnavailable(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid entity span [{start}, {end}) for text of {len} characters")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("comment {comment_id} belongs to market {expected}, not {found}")]
    Linkage {
        comment_id: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
