use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{extract_cls_attention, mass_partition, word_level, AttentionRecord, InterpretError, MassPartition};
use crate::corpus::{LabeledExample, Market, StanceLabel};
use crate::preprocess::{build_model_input, InputOptions, ModelInput, COMMENT_DELIMITER};
use crate::trainer::TrainedModel;

pub const CORRELATIONAL_DISCLAIMER: &str = "Attention weights show where the classification token attends. \
They are correlational evidence only and do not establish which tokens cause a prediction.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementCase {
    /// Input as formatted for model A.
    pub input_a: ModelInput,
    /// Input as formatted for model B; differs from `input_a` only in context.
    pub input_b: ModelInput,
    pub gold: StanceLabel,
    pub prediction_a: StanceLabel,
    pub prediction_b: StanceLabel,
    pub probabilities_a: Vec<f64>,
    pub probabilities_b: Vec<f64>,
    /// Total variation distance between the two class distributions.
    pub probability_gap: f64,
    pub record_a: AttentionRecord,
    pub record_b: AttentionRecord,
}

/// Examples on which the two models predict different labels, most divergent
/// first. `inputs_a[i]` and `inputs_b[i]` must describe the same comment.
pub fn select_disagreements(
    model_a: &TrainedModel,
    inputs_a: &[ModelInput],
    model_b: &TrainedModel,
    inputs_b: &[ModelInput],
    golds: &[StanceLabel],
) -> Result<Vec<DisagreementCase>, InterpretError> {
    if model_a.scheme != model_b.scheme {
        return Err(InterpretError::Config(format!(
            "models use different schemes ({} vs {})",
            model_a.scheme, model_b.scheme
        )));
    }
    if inputs_a.len() != golds.len() || inputs_b.len() != golds.len() {
        return Err(InterpretError::Config(format!(
            "{} / {} inputs for {} golds",
            inputs_a.len(),
            inputs_b.len(),
            golds.len()
        )));
    }
    let mut cases = Vec::new();
    for ((input_a, input_b), &gold) in inputs_a.iter().zip(inputs_b).zip(golds) {
        if input_a.comment_id != input_b.comment_id {
            return Err(InterpretError::Config(format!(
                "input pair mixes comments {} and {}",
                input_a.comment_id, input_b.comment_id
            )));
        }
        let a = model_a.predict_one(input_a)?;
        let b = model_b.predict_one(input_b)?;
        if a.label == b.label {
            continue;
        }
        let gap = 0.5
            * a.probabilities
                .iter()
                .zip(&b.probabilities)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        cases.push(DisagreementCase {
            input_a: input_a.clone(),
            input_b: input_b.clone(),
            gold,
            prediction_a: a.label,
            prediction_b: b.label,
            probabilities_a: a.probabilities,
            probabilities_b: b.probabilities,
            probability_gap: gap,
            record_a: extract_cls_attention(model_a, input_a, "a")?,
            record_b: extract_cls_attention(model_b, input_b, "b")?,
        });
    }
    cases.sort_by(|x, y| y.probability_gap.total_cmp(&x.probability_gap));
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextContrast {
    pub without_context: AttentionRecord,
    pub with_context: AttentionRecord,
    pub without_mass: MassPartition,
    pub with_mass: MassPartition,
}

/// Attention on the same comment from a model trained without context and
/// one trained with it.
pub fn context_contrast_report(
    model_without: &TrainedModel,
    model_with: &TrainedModel,
    example: &LabeledExample,
    market: &Market,
) -> Result<ContextContrast, InterpretError> {
    let plain = build_model_input(
        example,
        market,
        InputOptions {
            with_context: false,
            ..Default::default()
        },
        None,
    )?;
    let ctx = build_model_input(example, market, InputOptions::default(), None)?;
    let without_context = extract_cls_attention(model_without, &plain, "without_context")?;
    let with_context = extract_cls_attention(model_with, &ctx, "with_context")?;
    Ok(ContextContrast {
        without_mass: mass_partition(&without_context),
        with_mass: mass_partition(&with_context),
        without_context,
        with_context,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Special,
    Context,
    Comment,
}

/// Word-level weights tagged by segment. The `Market: ...` prefix and the
/// ` Comment: ` label count as context so comment words line up across
/// inputs built with and without context.
fn segmented_words(record: &AttentionRecord) -> Vec<(Segment, String, f64)> {
    let input = &record.input;
    let body_start = if input.with_context {
        input.comment_span.start + COMMENT_DELIMITER.len()
    } else {
        input.comment_span.start
    };
    let words = word_level(record);
    let mut starts = Vec::with_capacity(words.len());
    let mut current = None;
    for off in &record.offsets {
        match off {
            None => {
                current = None;
                starts.push(None);
            }
            Some((a, _)) => {
                let word_start = input.text[..*a].rfind(char::is_whitespace).map_or(0, |i| i + 1);
                if current != Some(word_start) {
                    current = Some(word_start);
                    starts.push(Some(*a));
                }
            }
        }
    }
    words
        .into_iter()
        .zip(starts)
        .map(|((w, v), start)| {
            let seg = match start {
                None => Segment::Special,
                Some(s) if s < body_start => Segment::Context,
                Some(_) => Segment::Comment,
            };
            (seg, w, v)
        })
        .collect()
}

/// Token-level rows when both records tokenize identically. Otherwise
/// word-level rows: the leading special token, context words, comment words
/// aligned by position, then the remaining special tokens; a side without a
/// counterpart gets weight 0.
pub fn aligned_rows(a: &AttentionRecord, b: &AttentionRecord) -> Vec<(String, f64, f64)> {
    if a.tokens == b.tokens {
        return a
            .tokens
            .iter()
            .zip(a.averaged.iter().zip(&b.averaged))
            .map(|(t, (x, y))| (t.clone(), *x, *y))
            .collect();
    }
    let wa = segmented_words(a);
    let wb = segmented_words(b);
    let pick = |words: &[(Segment, String, f64)], seg: Segment| -> Vec<(String, f64)> {
        words
            .iter()
            .filter(|w| w.0 == seg)
            .map(|w| (w.1.clone(), w.2))
            .collect()
    };
    let zip_longest = |x: &[(String, f64)], y: &[(String, f64)], out: &mut Vec<(String, f64, f64)>| {
        for i in 0..x.len().max(y.len()) {
            let word = x.get(i).or(y.get(i)).map(|w| w.0.clone()).unwrap_or_default();
            out.push((word, x.get(i).map_or(0.0, |w| w.1), y.get(i).map_or(0.0, |w| w.1)));
        }
    };
    let (sa, sb) = (pick(&wa, Segment::Special), pick(&wb, Segment::Special));
    let mut rows = Vec::new();
    zip_longest(&sa[..sa.len().min(1)], &sb[..sb.len().min(1)], &mut rows);
    zip_longest(&pick(&wa, Segment::Context), &pick(&wb, Segment::Context), &mut rows);
    zip_longest(&pick(&wa, Segment::Comment), &pick(&wb, Segment::Comment), &mut rows);
    zip_longest(&sa[sa.len().min(1)..], &sb[sb.len().min(1)..], &mut rows);
    rows
}

fn write_rows(rows: &[(String, f64, f64)], header: [&str; 3], path: &Path) -> Result<(), InterpretError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (t, a, b) in rows {
        w.write_record([t.clone(), a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CaseSummary<'a> {
    file: String,
    comment_id: &'a str,
    market_id: &'a str,
    text_a: &'a str,
    text_b: &'a str,
    gold: StanceLabel,
    prediction_a: StanceLabel,
    prediction_b: StanceLabel,
    probability_gap: f64,
    mass_a: MassPartition,
    mass_b: MassPartition,
}

/// One `case_<n>.csv` (token, weight_model_a, weight_model_b) per case plus
/// `disagreements.json` with mass partitions and the disclaimer.
pub fn write_disagreement_report(
    cases: &[DisagreementCase],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, InterpretError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let name = format!("case_{:03}.csv", i + 1);
        let path = dir.join(&name);
        write_rows(
            &aligned_rows(&case.record_a, &case.record_b),
            ["token", "weight_model_a", "weight_model_b"],
            &path,
        )?;
        written.push(path);
        summaries.push(CaseSummary {
            file: name,
            comment_id: &case.input_a.comment_id,
            market_id: &case.input_a.market_id,
            text_a: &case.input_a.text,
            text_b: &case.input_b.text,
            gold: case.gold,
            prediction_a: case.prediction_a,
            prediction_b: case.prediction_b,
            probability_gap: case.probability_gap,
            mass_a: mass_partition(&case.record_a),
            mass_b: mass_partition(&case.record_b),
        });
    }
    let path = dir.join("disagreements.json");
    let doc = serde_json::json!({
        "disclaimer": CORRELATIONAL_DISCLAIMER,
        "evenness_statistic": "entropy of the head-averaged distribution (nats)",
        "cases": summaries,
    });
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&doc).map_err(|e| InterpretError::Config(e.to_string()))?,
    )?;
    written.push(path);
    Ok(written)
}

/// Writes word-level weights of both sides and a JSON summary for one contrast.
pub fn write_context_contrast(
    contrast: &ContextContrast,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<Vec<PathBuf>, InterpretError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (record, suffix) in [(&contrast.without_context, "without"), (&contrast.with_context, "with")] {
        let path = dir.join(format!("{stem}_{suffix}_context.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["token", "weight"])?;
        for (t, v) in record.tokens.iter().zip(&record.averaged) {
            w.write_record([t.clone(), v.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    let path = dir.join(format!("{stem}_summary.json"));
    let doc = serde_json::json!({
        "disclaimer": CORRELATIONAL_DISCLAIMER,
        "comment_id": contrast.with_context.input.comment_id,
        "without_context": contrast.without_mass,
        "with_context": contrast.with_mass,
    });
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&doc).map_err(|e| InterpretError::Config(e.to_string()))?,
    )?;
    written.push(path);
    Ok(written)
}
