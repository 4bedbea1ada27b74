use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::corpus::{LabeledExample, Market, StanceLabel};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub model_id: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            max_output_tokens: 150,
            model_id: "claude-haiku-4-5".into(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.temperature > 0.0 && self.temperature <= 2.0) {
            return Err(AugmentError::Config(format!(
                "temperature {} outside (0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(AugmentError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_output_tokens == 0 {
            return Err(AugmentError::Config("max_output_tokens must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(AugmentError::Config("model_id is empty".into()));
        }
        Ok(())
    }
}

const SYSTEM_PROMPT: &str = "You rewrite comments posted by traders on a prediction market. \
You will receive a market question and a comment that supports the outcome in the question (Pro stance). \
Write the comment a trader opposing that outcome would post (Anti stance). \
Preserve the original tone, slang, and approximate length. \
Output the raw comment text only: no preamble, no quotation marks, no explanation.";

pub const USER_COMMENT_LABEL: &str = "Original comment: ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipPrompt {
    pub system: String,
    pub user: String,
}

impl FlipPrompt {
    pub fn hash(&self) -> String {
        sha256_hex(format!("{}\u{0}{}", self.system, self.user))
    }

    /// The original comment embedded in the user message.
    pub fn original_comment(&self) -> Option<&str> {
        self.user.split_once(USER_COMMENT_LABEL).map(|(_, c)| c)
    }
}

/// Prompt pair asking for a Pro to Anti rewrite of `example`.
pub fn build_flip_prompt(example: &LabeledExample, market: &Market) -> Result<FlipPrompt, AugmentError> {
    if example.label != StanceLabel::Pro {
        return Err(AugmentError::NotPro {
            comment_id: example.id().to_string(),
            label: example.label,
        });
    }
    if example.comment.text.trim().is_empty() {
        return Err(AugmentError::EmptySource(example.id().to_string()));
    }
    Ok(FlipPrompt {
        system: SYSTEM_PROMPT.to_string(),
        user: format!(
            "Market question: {}\n{USER_COMMENT_LABEL}{}",
            market.question, example.comment.text
        ),
    })
}
