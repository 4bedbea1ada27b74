use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{FlipPrompt, GenerationConfig};
use crate::preprocess::{mask_text, NerProvider};
use crate::util::excerpt;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub source_id: String,
    pub prompt: FlipPrompt,
    pub config: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub output_tokens: Option<u32>,
    pub stop_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("service refused the request: {0}")]
    Refused(String),
    #[error("service returned no text")]
    Empty,
    #[error("post-processing failed: {0}")]
    Postprocess(String),
}

impl GenerationError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GenerationError::Transport(_))
    }
}

/// A text-generation service. Implementations are shared across worker threads.
pub trait GenerationClient: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError>;
}

pub const API_KEY_ENV: &str = "ANTHROPIC_API_KEY";
pub const BASE_URL_ENV: &str = "ANTHROPIC_BASE_URL";

/// Client for the Anthropic Messages API.
pub struct AnthropicClient {
    http: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl AnthropicClient {
    pub const DEFAULT_BASE_URL: &'static str = "https://api.anthropic.com";
    pub const API_VERSION: &'static str = "2023-06-01";

    pub fn new(
        api_key: impl Into<String>,
        base_url: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, GenerationError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(GenerationError::Refused("API key is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        })
    }

    /// Reads the key from `ANTHROPIC_API_KEY` and an optional base URL override
    /// from `ANTHROPIC_BASE_URL`.
    pub fn from_env() -> Result<Self, GenerationError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| GenerationError::Refused(format!("environment variable {API_KEY_ENV} is not set")))?;
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| Self::DEFAULT_BASE_URL.to_string());
        Self::new(key, base, Duration::from_secs(60))
    }

    fn body(request: &GenerationRequest, with_top_p: bool) -> Value {
        let c = &request.config;
        let mut body = json!({
            "model": c.model_id,
            "max_tokens": c.max_output_tokens,
            "temperature": c.temperature,
            "system": request.prompt.system,
            "messages": [{"role": "user", "content": request.prompt.user}],
        });
        if with_top_p {
            body["top_p"] = json!(c.top_p);
        }
        body
    }

    fn post(&self, body: &Value) -> Result<(reqwest::StatusCode, String), GenerationError> {
        let resp = self
            .http
            .post(format!("{}/v1/messages", self.base_url))
            .header("x-api-key", &self.api_key)
            .header("anthropic-version", Self::API_VERSION)
            .json(body)
            .send()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GenerationError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

pub(crate) fn parse_messages_response(body: &str) -> Result<GenerationResponse, GenerationError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| GenerationError::Transport(format!("unparseable response ({e}): {}", excerpt(body))))?;
    let stop_reason = v.get("stop_reason").and_then(Value::as_str).map(str::to_string);
    if stop_reason.as_deref() == Some("refusal") {
        return Err(GenerationError::Refused("stop_reason = refusal".into()));
    }
    let text: String = v
        .get("content")
        .and_then(Value::as_array)
        .map(|blocks| {
            blocks
                .iter()
                .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect()
        })
        .unwrap_or_default();
    let output_tokens = v
        .pointer("/usage/output_tokens")
        .and_then(Value::as_u64)
        .map(|n| n as u32);
    Ok(GenerationResponse {
        text,
        output_tokens,
        stop_reason,
    })
}

impl GenerationClient for AnthropicClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        let (mut status, mut body) = self.post(&Self::body(request, true))?;
        // Some models accept only one of temperature and top_p.
        if status == reqwest::StatusCode::BAD_REQUEST && body.contains("top_p") {
            log::warn!("service rejected top_p together with temperature; retrying without top_p");
            (status, body) = self.post(&Self::body(request, false))?;
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(GenerationError::Transport(format!("HTTP {status}: {}", excerpt(&body))));
        }
        if !status.is_success() {
            return Err(GenerationError::Refused(format!("HTTP {status}: {}", excerpt(&body))));
        }
        parse_messages_response(&body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum StubReply {
    Text(String),
    Transport(String),
    Refusal(String),
}

/// Masks entities in every generated text with `recognizer`, so samples
/// mixed into an entity-masked dataset are filtered and trained on in the
/// same form as the real comments.
pub struct MaskingClient<'a> {
    inner: &'a dyn GenerationClient,
    recognizer: &'a dyn NerProvider,
}

impl<'a> MaskingClient<'a> {
    pub fn new(inner: &'a dyn GenerationClient, recognizer: &'a dyn NerProvider) -> Self {
        Self { inner, recognizer }
    }
}

impl GenerationClient for MaskingClient<'_> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        let mut response = self.inner.generate(request)?;
        response.text =
            mask_text(&response.text, self.recognizer).map_err(|e| GenerationError::Postprocess(e.to_string()))?;
        Ok(response)
    }
}

/// Deterministic offline client answering from canned replies keyed by source id.
#[derive(Debug, Clone, Default)]
pub struct StubClient {
    replies: HashMap<String, StubReply>,
    fallback: Option<RuleFlip>,
}

impl StubClient {
    pub fn new(replies: HashMap<String, StubReply>) -> Self {
        Self {
            replies,
            fallback: None,
        }
    }

    pub fn from_texts(texts: impl IntoIterator<Item = (String, String)>) -> Self {
        Self::new(texts.into_iter().map(|(k, v)| (k, StubReply::Text(v))).collect())
    }

    /// Client that answers every source with a rule-based rewrite.
    pub fn rule_based() -> Self {
        Self {
            replies: HashMap::new(),
            fallback: Some(RuleFlip),
        }
    }

    /// Sources without a canned reply get a rule-based rewrite instead of a refusal.
    pub fn with_rule_fallback(mut self) -> Self {
        self.fallback = Some(RuleFlip);
        self
    }

    /// Reads a JSON object mapping source id to either a string or a
    /// `{"kind": ..., "text": ...}` reply.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, super::AugmentError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Plain(String),
            Tagged(StubReply),
        }
        let raw: HashMap<String, Entry> = serde_json::from_str(&text)
            .map_err(|e| super::AugmentError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self::new(
            raw.into_iter()
                .map(|(k, v)| {
                    let reply = match v {
                        Entry::Plain(t) => StubReply::Text(t),
                        Entry::Tagged(r) => r,
                    };
                    (k, reply)
                })
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl GenerationClient for StubClient {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GenerationError> {
        let text = match (self.replies.get(&request.source_id), &self.fallback) {
            (Some(StubReply::Text(t)), _) => t.clone(),
            (Some(StubReply::Transport(m)), _) => return Err(GenerationError::Transport(m.clone())),
            (Some(StubReply::Refusal(m)), _) => return Err(GenerationError::Refused(m.clone())),
            (None, Some(rule)) => rule.flip(request.prompt.original_comment().unwrap_or_default()),
            (None, None) => {
                return Err(GenerationError::Refused(format!(
                    "no canned reply for source {}",
                    request.source_id
                )))
            }
        };
        Ok(GenerationResponse {
            output_tokens: Some(text.split_whitespace().count() as u32),
            text,
            stop_reason: Some("end_turn".into()),
        })
    }
}

/// Word-level antonym substitution with a dismissive opener; a crude,
/// deterministic stand-in for a generator.
#[derive(Debug, Clone, Copy, Default)]
struct RuleFlip;

const ANTONYMS: &[(&str, &str)] = &[
    ("win", "lose"),
    ("wins", "loses"),
    ("winning", "losing"),
    ("won", "lost"),
    ("yes", "no"),
    ("up", "down"),
    ("bullish", "bearish"),
    ("moon", "dump"),
    ("easy", "never"),
    ("lock", "fade"),
    ("locked", "cooked"),
    ("free", "zero"),
    ("guaranteed", "impossible"),
    ("will", "won't"),
    ("is", "isn't"),
    ("definitely", "no way"),
    ("buy", "sell"),
    ("buying", "selling"),
    ("long", "short"),
    ("cut", "hold"),
    ("high", "low"),
    ("strong", "weak"),
    ("love", "hate"),
    ("good", "bad"),
];

const OPENERS: &[&str] = &["nah", "lol no", "doubt it", "fading this"];

impl RuleFlip {
    fn flip(&self, comment: &str) -> String {
        let words: Vec<String> = comment
            .split_whitespace()
            .map(|w| {
                let lower = w.to_lowercase();
                ANTONYMS
                    .iter()
                    .find_map(|(a, b)| {
                        if lower == *a {
                            Some(b.to_string())
                        } else if lower == *b {
                            Some(a.to_string())
                        } else {
                            None
                        }
                    })
                    .unwrap_or_else(|| w.to_string())
            })
            .collect();
        let opener = OPENERS[comment.len() % OPENERS.len()];
        format!("{opener} {}", words.join(" "))
    }
}
