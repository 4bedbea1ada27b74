use serde::Serialize;

use super::InterpretError;
use crate::preprocess::ModelInput;
use crate::trainer::TrainedModel;
use marketstance_nn::Mode;

/// CLS-query attention of one layer for one input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionRecord {
    pub tokens: Vec<String>,
    /// Byte spans in `input.text`; `None` for special tokens.
    pub offsets: Vec<Option<(usize, usize)>>,
    /// One row per head: attention from position 0 over all positions.
    pub per_head: Vec<Vec<f64>>,
    pub averaged: Vec<f64>,
    pub layer: usize,
    pub model_tag: String,
    pub input: ModelInput,
    pub truncated: bool,
}

/// Element-wise mean of the head rows.
pub fn average_heads(per_head: &[Vec<f64>]) -> Result<Vec<f64>, InterpretError> {
    let first = per_head.first().ok_or(InterpretError::NoHeads)?;
    if per_head.iter().any(|r| r.len() != first.len()) {
        return Err(InterpretError::Shape("head rows differ in length".into()));
    }
    let h = per_head.len() as f64;
    Ok((0..first.len())
        .map(|t| per_head.iter().map(|r| r[t]).sum::<f64>() / h)
        .collect())
}

/// Final-layer CLS attention.
pub fn extract_cls_attention(
    model: &TrainedModel,
    input: &ModelInput,
    model_tag: &str,
) -> Result<AttentionRecord, InterpretError> {
    extract_cls_attention_at(model, input, None, model_tag)
}

/// CLS attention of `layer` (0-based; `None` for the final layer).
pub fn extract_cls_attention_at(
    model: &TrainedModel,
    input: &ModelInput,
    layer: Option<usize>,
    model_tag: &str,
) -> Result<AttentionRecord, InterpretError> {
    let enc = model.encode(&input.text)?;
    if enc.truncated {
        log::warn!(
            "input {} truncated to {} tokens for attention extraction",
            input.comment_id,
            enc.len()
        );
    }
    let cache = model
        .classifier
        .forward(&enc.ids, Mode::Eval)
        .map_err(crate::trainer::TrainError::from)?;
    let layers = cache.num_layers();
    let layer = layer.unwrap_or(layers - 1);
    let heads = cache.attention(layer).ok_or(InterpretError::Layer { layer, layers })?;
    let per_head: Vec<Vec<f64>> = heads.iter().map(|a| a.row(0).to_vec()).collect();
    let averaged = average_heads(&per_head)?;
    Ok(AttentionRecord {
        tokens: enc.tokens,
        offsets: enc.offsets,
        per_head,
        averaged,
        layer,
        model_tag: model_tag.to_string(),
        input: input.clone(),
        truncated: enc.truncated,
    })
}

/// Shannon entropy (nats) of a distribution; higher means more even.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// How the averaged attention splits between question, comment and special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassPartition {
    pub question: f64,
    pub comment: f64,
    pub special: f64,
    pub first_token: f64,
    pub last_token: f64,
    pub entropy: f64,
}

/// Tokens are attributed by their start offset to the question or comment
/// segment recorded when the input was built.
pub fn mass_partition(record: &AttentionRecord) -> MassPartition {
    let q = &record.input.question_span;
    let mut m = MassPartition {
        question: 0.0,
        comment: 0.0,
        special: 0.0,
        first_token: 0.0,
        last_token: 0.0,
        entropy: entropy(&record.averaged),
    };
    let last = record.averaged.len().saturating_sub(1);
    for (i, (&w, off)) in record.averaged.iter().zip(&record.offsets).enumerate() {
        match off {
            None => {
                m.special += w;
                if i == 0 {
                    m.first_token += w;
                }
                if i == last {
                    m.last_token += w;
                }
            }
            Some((start, _)) if q.contains(start) => m.question += w,
            Some(_) => m.comment += w,
        }
    }
    m
}

/// Attention summed per whitespace-delimited word of the input; special
/// tokens stay separate entries.
pub fn word_level(record: &AttentionRecord) -> Vec<(String, f64)> {
    let text = &record.input.text;
    let mut words: Vec<(String, f64)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for ((tok, off), &w) in record.tokens.iter().zip(&record.offsets).zip(&record.averaged) {
        match off {
            None => {
                current = None;
                words.push((tok.clone(), w));
            }
            Some((a, b)) => {
                let word_start = text[..*a].rfind(char::is_whitespace).map_or(0, |i| i + 1);
                match current {
                    Some((start, _)) if start == word_start => {
                        let last = words.last_mut().expect("open word");
                        last.1 += w;
                        current = Some((start, *b));
                        last.0 = text[start..*b].to_string();
                    }
                    _ => {
                        current = Some((word_start, *b));
                        words.push((text[word_start.min(*a)..*b].to_string(), w));
                    }
                }
            }
        }
    }
    words
}
