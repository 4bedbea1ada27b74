use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{NnError, Result};

/// Token ids plus the byte span of each token in the source text.
///
/// Special tokens (sequence start/end) carry `None` offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub tokens: Vec<String>,
    pub offsets: Vec<Option<(usize, usize)>>,
    pub truncated: bool,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub trait TextTokenizer: Send + Sync {
    /// Encodes `text` with start/end special tokens, truncating the content so
    /// the result holds at most `max_len` tokens.
    fn encode(&self, text: &str, max_len: usize) -> Result<Encoding>;

    fn vocab_size(&self) -> usize;
}

pub const BOS: &str = "<s>";
pub const PAD: &str = "<pad>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordTokenizerConfig {
    pub lowercase: bool,
    pub min_count: usize,
    pub max_vocab: Option<usize>,
}

impl Default for WordTokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_count: 1,
            max_vocab: None,
        }
    }
}

/// Word-level tokenizer fitted on a corpus; the stand-in for a subword
/// tokenizer when training the tiny encoder.
///
/// Words are maximal alphanumeric runs (internal apostrophes allowed); every
/// other non-space character is a token of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "WordTokenizerRepr", into = "WordTokenizerRepr")]
pub struct WordTokenizer {
    config: WordTokenizerConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct WordTokenizerRepr {
    config: WordTokenizerConfig,
    vocab: Vec<String>,
}

impl From<WordTokenizerRepr> for WordTokenizer {
    fn from(repr: WordTokenizerRepr) -> Self {
        Self::from_vocab(repr.config, repr.vocab)
    }
}

impl From<WordTokenizer> for WordTokenizerRepr {
    fn from(tok: WordTokenizer) -> Self {
        Self {
            config: tok.config,
            vocab: tok.vocab,
        }
    }
}

/// Byte spans of the pre-tokenized pieces of `text`.
fn split_words(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                let apostrophe = matches!(cj, '\'' | '’') && chars.get(j + 1).is_some_and(|(_, n)| n.is_alphanumeric());
                if cj.is_alphanumeric() || apostrophe {
                    j += 1;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(text.len(), |(b, _)| *b);
            spans.push((start, end));
            i = j;
        } else {
            spans.push((start, start + c.len_utf8()));
            i += 1;
        }
    }
    spans
}

impl WordTokenizer {
    pub fn from_vocab(config: WordTokenizerConfig, vocab: Vec<String>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Self { config, vocab, index }
    }

    /// Builds a vocabulary ordered by descending frequency, ties broken
    /// lexicographically, after the four special tokens.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, config: WordTokenizerConfig) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for (a, b) in split_words(text) {
                *counts.entry(Self::normalize(&config, &text[a..b])).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= config.min_count && ![BOS, PAD, EOS, UNK].contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = config.max_vocab {
            words.truncate(max);
        }
        let vocab = [BOS, PAD, EOS, UNK]
            .into_iter()
            .map(String::from)
            .chain(words.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_vocab(config, vocab)
    }

    fn normalize(config: &WordTokenizerConfig, word: &str) -> String {
        if config.lowercase {
            word.to_lowercase()
        } else {
            word.to_string()
        }
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }
}

impl TextTokenizer for WordTokenizer {
    fn encode(&self, text: &str, max_len: usize) -> Result<Encoding> {
        if max_len < 2 {
            return Err(NnError::Tokenizer(format!(
                "max_len {max_len} cannot hold special tokens"
            )));
        }
        let spans = split_words(text);
        let room = max_len - 2;
        let truncated = spans.len() > room;
        let mut enc = Encoding {
            ids: vec![0],
            tokens: vec![BOS.into()],
            offsets: vec![None],
            truncated,
        };
        for (a, b) in spans.into_iter().take(room) {
            let word = Self::normalize(&self.config, &text[a..b]);
            let id = self.index.get(&word).copied().unwrap_or(3);
            enc.ids.push(id);
            enc.tokens.push(text[a..b].to_string());
            enc.offsets.push(Some((a, b)));
        }
        enc.ids.push(2);
        enc.tokens.push(EOS.into());
        enc.offsets.push(None);
        Ok(enc)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Wrapper around a `tokenizer.json` produced by the HuggingFace tokenizers
/// library (byte-level BPE for RoBERTa, WordPiece for BERT).
#[derive(Clone)]
pub struct HfTokenizer {
    inner: tokenizers::Tokenizer,
}

impl std::fmt::Debug for HfTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HfTokenizer")
            .field("vocab_size", &self.inner.get_vocab_size(true))
            .finish()
    }
}

impl HfTokenizer {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let inner = tokenizers::Tokenizer::from_file(path.as_ref())
            .map_err(|e| NnError::Tokenizer(format!("{}: {e}", path.as_ref().display())))?;
        Ok(Self { inner })
    }

    pub fn from_tokenizer(inner: tokenizers::Tokenizer) -> Self {
        Self { inner }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.inner
            .save(path.as_ref(), false)
            .map_err(|e| NnError::Tokenizer(e.to_string()))
    }
}

fn keep_head_and_last<T>(v: &mut Vec<T>, keep: usize) {
    if let Some(last) = v.pop() {
        v.truncate(keep);
        v.push(last);
    }
}

impl TextTokenizer for HfTokenizer {
    fn encode(&self, text: &str, max_len: usize) -> Result<Encoding> {
        if max_len < 2 {
            return Err(NnError::Tokenizer(format!(
                "max_len {max_len} cannot hold special tokens"
            )));
        }
        let enc = self
            .inner
            .encode(text, true)
            .map_err(|e| NnError::Tokenizer(e.to_string()))?;
        let special = enc.get_special_tokens_mask();
        let mut out = Encoding {
            ids: enc.get_ids().to_vec(),
            tokens: enc.get_tokens().to_vec(),
            offsets: enc
                .get_offsets()
                .iter()
                .zip(special)
                .map(|(&(a, b), &s)| (s == 0).then_some((a, b)))
                .collect(),
            truncated: false,
        };
        if out.ids.len() > max_len {
            // keep the leading tokens and the closing special token
            let keep = max_len - 1;
            keep_head_and_last(&mut out.ids, keep);
            keep_head_and_last(&mut out.tokens, keep);
            keep_head_and_last(&mut out.offsets, keep);
            out.truncated = true;
        }
        Ok(out)
    }

    fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_and_punctuation() {
        let text = "Yoo Seong moving! didn't";
        let pieces: Vec<&str> = split_words(text).into_iter().map(|(a, b)| &text[a..b]).collect();
        assert_eq!(pieces, ["Yoo", "Seong", "moving", "!", "didn't"]);
        assert!(split_words("   ").is_empty());
    }

    #[test]
    fn encode_adds_specials_and_maps_unknowns() {
        let tok = WordTokenizer::fit(["free money", "money money"], WordTokenizerConfig::default());
        assert_eq!(tok.vocab()[4], "money");
        let enc = tok.encode("Free cash", 16).unwrap();
        assert_eq!(enc.tokens, ["<s>", "Free", "cash", "</s>"]);
        assert_eq!(enc.ids, [0, tok.token_id("free").unwrap(), 3, 2]);
        assert_eq!(enc.offsets, [None, Some((0, 4)), Some((5, 9)), None]);
        assert!(!enc.truncated);
    }

    #[test]
    fn truncation_is_flagged() {
        let tok = WordTokenizer::fit(["a b c d e"], WordTokenizerConfig::default());
        let enc = tok.encode("a b c d e", 4).unwrap();
        assert_eq!(enc.len(), 4);
        assert!(enc.truncated);
        assert_eq!(enc.tokens.last().unwrap(), EOS);
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let tok = WordTokenizer::fit(["nah rip", "this is cooked"], WordTokenizerConfig::default());
        let json = serde_json::to_string(&tok).unwrap();
        let back: WordTokenizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tok);
        assert_eq!(back.token_id("cooked"), tok.token_id("cooked"));
    }
}
