use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{mask_text, NerProvider, PreprocessError};
use crate::corpus::{LabeledExample, Market};

pub const QUESTION_PREFIX: &str = "Market: ";
pub const COMMENT_DELIMITER: &str = " Comment: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputOptions {
    pub with_context: bool,
    /// Mask entities in the comment body at build time.
    pub mask: bool,
    pub mask_question: bool,
}

impl Default for InputOptions {
    fn default() -> Self {
        Self {
            with_context: true,
            mask: false,
            mask_question: false,
        }
    }
}

/// The exact string handed to the tokenizer, with the byte range of each
/// segment so tokens can be attributed to question or comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub text: String,
    pub with_context: bool,
    pub comment_id: String,
    pub market_id: String,
    /// `Market: {question}`; empty without context.
    pub question_span: Range<usize>,
    /// ` Comment: {text}` with context, the whole text without.
    pub comment_span: Range<usize>,
    /// The comment itself contains the delimiter, so parsing back is ambiguous.
    pub delimiter_in_comment: bool,
}

/// Formats `example` for the encoder, optionally prepending the market question.
pub fn build_model_input(
    example: &LabeledExample,
    market: &Market,
    options: InputOptions,
    recognizer: Option<&dyn NerProvider>,
) -> Result<ModelInput, PreprocessError> {
    if example.market_id() != market.market_id {
        return Err(PreprocessError::Linkage {
            comment_id: example.id().to_string(),
            expected: example.market_id().to_string(),
            found: market.market_id.clone(),
        });
    }
    let needs_recognizer = options.mask || (options.with_context && options.mask_question);
    let recognizer = match (needs_recognizer, recognizer) {
        (true, None) => {
            return Err(PreprocessError::RecognizerUnavailable(
                "masking requested but no recognizer configured".into(),
            ))
        }
        (_, r) => r,
    };
    let comment = match (options.mask, recognizer) {
        (true, Some(r)) => mask_text(&example.comment.text, r)?,
        _ => example.comment.text.clone(),
    };
    let delimiter_in_comment = comment.contains(COMMENT_DELIMITER);
    if delimiter_in_comment {
        log::warn!(
            "comment {} contains the context delimiter; passed through unchanged",
            example.id()
        );
    }
    let base = ModelInput {
        text: String::new(),
        with_context: options.with_context,
        comment_id: example.id().to_string(),
        market_id: market.market_id.clone(),
        question_span: 0..0,
        comment_span: 0..0,
        delimiter_in_comment,
    };
    if !options.with_context {
        return Ok(ModelInput {
            comment_span: 0..comment.len(),
            text: comment,
            ..base
        });
    }
    let question = match (options.mask_question, recognizer) {
        (true, Some(r)) => mask_text(&market.question, r)?,
        _ => market.question.clone(),
    };
    let text = format!("{QUESTION_PREFIX}{question}{COMMENT_DELIMITER}{comment}");
    let split = QUESTION_PREFIX.len() + question.len();
    Ok(ModelInput {
        question_span: 0..split,
        comment_span: split..text.len(),
        text,
        ..base
    })
}

/// Recovers `(question, comment)` from a context-formatted input by splitting
/// on the first delimiter.
pub fn split_context_input(text: &str) -> Option<(&str, &str)> {
    text.strip_prefix(QUESTION_PREFIX)?.split_once(COMMENT_DELIMITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Comment, Domain, StanceLabel};

    #[test]
    fn context_format_and_spans() {
        let market = Market::new("kr", "Next president of South Korea?", Domain::Politics).unwrap();
        let ex = LabeledExample::real(Comment::new("c", "kr", "Yoo Seong moving"), StanceLabel::Pro);
        let input = build_model_input(&ex, &market, InputOptions::default(), None).unwrap();
        assert_eq!(
            input.text,
            "Market: Next president of South Korea? Comment: Yoo Seong moving"
        );
        assert_eq!(
            &input.text[input.question_span.clone()],
            "Market: Next president of South Korea?"
        );
        assert_eq!(&input.text[input.comment_span.clone()], " Comment: Yoo Seong moving");
        let plain = InputOptions {
            with_context: false,
            ..Default::default()
        };
        let input = build_model_input(&ex, &market, plain, None).unwrap();
        assert_eq!(input.text, "Yoo Seong moving");
        assert!(input.question_span.is_empty());
    }

    #[test]
    fn masking_without_recognizer_is_a_config_error() {
        let market = Market::new("m", "q?", Domain::Sports).unwrap();
        let ex = LabeledExample::real(Comment::new("c", "m", "x"), StanceLabel::Pro);
        let opts = InputOptions {
            mask: true,
            ..Default::default()
        };
        assert!(matches!(
            build_model_input(&ex, &market, opts, None),
            Err(PreprocessError::RecognizerUnavailable(_))
        ));
        let other = Market::new("z", "q?", Domain::Sports).unwrap();
        assert!(matches!(
            build_model_input(&ex, &other, InputOptions::default(), None),
            Err(PreprocessError::Linkage { .. })
        ));
    }
}
