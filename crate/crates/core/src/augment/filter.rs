use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionRule {
    MinLength,
    MetaCommentary,
    LengthRatio,
    EchoOverlap,
}

impl RejectionRule {
    pub const ORDER: [RejectionRule; 4] = [
        RejectionRule::MinLength,
        RejectionRule::MetaCommentary,
        RejectionRule::LengthRatio,
        RejectionRule::EchoOverlap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectionRule::MinLength => "min_length",
            RejectionRule::MetaCommentary => "meta_commentary",
            RejectionRule::LengthRatio => "length_ratio",
            RejectionRule::EchoOverlap => "echo_overlap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    /// Reject when generated/original word ratio exceeds this.
    pub max_length_ratio: f64,
    /// Reject when token overlap exceeds this.
    pub max_overlap: f64,
    pub min_words: usize,
    pub meta_prefixes: Vec<String>,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            max_length_ratio: 2.0,
            max_overlap: 0.8,
            min_words: 3,
            meta_prefixes: vec!["here".into(), "sure".into(), "i".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub accepted: bool,
    pub length_ratio: f64,
    pub overlap: f64,
    pub rejected_by: Option<RejectionRule>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn token_set(text: &str) -> HashSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Share of the generated text's distinct lowercased whitespace tokens that
/// also occur in the original. Zero when the generated text has no tokens.
pub fn token_overlap(original: &str, generated: &str) -> f64 {
    let gen = token_set(generated);
    if gen.is_empty() {
        return 0.0;
    }
    let orig = token_set(original);
    gen.intersection(&orig).count() as f64 / gen.len() as f64
}

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '*'];

/// First word with leading quotes and trailing punctuation removed, lowercased.
fn leading_word(text: &str) -> Option<String> {
    let first = text.trim_start().trim_start_matches(QUOTES).split_whitespace().next()?;
    let word = first.trim_end_matches(|c: char| !c.is_alphanumeric());
    Some(word.to_lowercase())
}

pub fn quality_verdict(original: &str, generated: &str) -> FilterVerdict {
    quality_verdict_with(original, generated, &FilterThresholds::default())
}

/// Applies the four rules in fixed order (min length, meta commentary, length
/// ratio, echo overlap); the first failure is recorded. Both diagnostics are
/// always computed.
pub fn quality_verdict_with(original: &str, generated: &str, t: &FilterThresholds) -> FilterVerdict {
    let gen_words = word_count(generated);
    let length_ratio = gen_words as f64 / word_count(original).max(1) as f64;
    let overlap = token_overlap(original, generated);
    let is_meta = leading_word(generated).is_some_and(|w| t.meta_prefixes.iter().any(|p| p.eq_ignore_ascii_case(&w)));
    let rejected_by = if gen_words < t.min_words {
        Some(RejectionRule::MinLength)
    } else if is_meta {
        Some(RejectionRule::MetaCommentary)
    } else if length_ratio > t.max_length_ratio {
        Some(RejectionRule::LengthRatio)
    } else if overlap > t.max_overlap {
        Some(RejectionRule::EchoOverlap)
    } else {
        None
    };
    FilterVerdict {
        accepted: rejected_by.is_none(),
        length_ratio,
        overlap,
        rejected_by,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_word_strips_quotes_and_punctuation() {
        assert_eq!(leading_word("\"Sure, here it is").as_deref(), Some("sure"));
        assert_eq!(leading_word("  \u{201c}I think so").as_deref(), Some("i"));
        assert_eq!(leading_word("I'm out").as_deref(), Some("i'm"));
        assert_eq!(leading_word("   "), None);
    }

    #[test]
    fn overlap_is_normalised_by_generated_side() {
        assert_eq!(token_overlap("a b c d", "a b"), 1.0);
        assert_eq!(token_overlap("a b", "a x y z"), 0.25);
        assert_eq!(token_overlap("a", ""), 0.0);
        assert_eq!(token_overlap("Yes YES", "yes"), 1.0);
    }
}
