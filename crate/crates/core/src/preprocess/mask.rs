use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{recognize_entities, EntityKind, EntitySpan, NerProvider, PreprocessError};
use crate::corpus::{DatasetBundle, TextTransform};

pub const ENTITY_TOKEN: &str = "ENTITY";

/// Replaces each span with [`ENTITY_TOKEN`]. Spans must be sorted,
/// non-overlapping and inside the text (character offsets).
pub fn mask_entities(text: &str, spans: &[EntitySpan]) -> Result<String, PreprocessError> {
    let char_len = text.chars().count();
    let mut prev_end = 0;
    for span in spans {
        if span.start >= span.end || span.end > char_len || span.start < prev_end {
            return Err(PreprocessError::InvalidSpan {
                start: span.start,
                end: span.end,
                len: char_len,
            });
        }
        prev_end = span.end;
    }
    let mut byte_at: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    byte_at.push(text.len());
    let mut out = text.to_string();
    for span in spans.iter().rev() {
        out.replace_range(byte_at[span.start]..byte_at[span.end], ENTITY_TOKEN);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaskingRow {
    pub market_id: String,
    pub kind: EntityKind,
    pub count: usize,
}

/// Entity counts per market and kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskingReport {
    counts: BTreeMap<(String, EntityKind), usize>,
    pub masked_comments: usize,
    pub total_comments: usize,
}

impl MaskingReport {
    fn add(&mut self, market_id: &str, spans: &[EntitySpan]) {
        self.total_comments += 1;
        if !spans.is_empty() {
            self.masked_comments += 1;
        }
        for span in spans {
            *self.counts.entry((market_id.to_string(), span.kind)).or_default() += 1;
        }
    }

    pub fn rows(&self) -> Vec<MaskingRow> {
        self.counts
            .iter()
            .map(|((market_id, kind), &count)| MaskingRow {
                market_id: market_id.clone(),
                kind: *kind,
                count,
            })
            .collect()
    }

    pub fn total_entities(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Masks entities in every comment of `bundle` and tags the bundle as masked.
pub fn mask_bundle(
    bundle: &DatasetBundle,
    recognizer: &dyn NerProvider,
) -> Result<(DatasetBundle, MaskingReport), PreprocessError> {
    if bundle.transform.as_ref().is_some_and(|t| t.masked) {
        return Err(PreprocessError::Config("dataset is already entity-masked".into()));
    }
    let texts: Vec<&str> = bundle.examples.iter().map(|e| e.comment.text.as_str()).collect();
    let raw = recognizer.recognize_batch(&texts)?;
    let mut out = bundle.clone();
    let mut report = MaskingReport::default();
    for (ex, spans) in out.examples.iter_mut().zip(raw) {
        let spans = super::normalize_spans(spans);
        report.add(&ex.comment.market_id, &spans);
        ex.comment.text = mask_entities(&ex.comment.text, &spans)?;
    }
    out.transform = Some(TextTransform {
        masked: true,
        recognizer: recognizer.name().to_string(),
    });
    Ok((out, report))
}

/// Masks a single text with `recognizer`.
pub fn mask_text(text: &str, recognizer: &dyn NerProvider) -> Result<String, PreprocessError> {
    mask_entities(text, &recognize_entities(text, recognizer)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replaces_right_to_left() {
        let spans = [
            EntitySpan::new(0, 5, EntityKind::Person),
            EntitySpan::new(15, 19, EntityKind::Gpe),
        ];
        assert_eq!(
            mask_entities("Trump will win Ohio", &spans).unwrap(),
            "ENTITY will win ENTITY"
        );
        assert_eq!(
            mask_entities("AB", &[EntitySpan::new(0, 2, EntityKind::Person)]).unwrap(),
            "ENTITY"
        );
        assert_eq!(
            mask_entities("über Köln!", &[EntitySpan::new(5, 9, EntityKind::Gpe)]).unwrap(),
            "über ENTITY!"
        );
    }

    #[test]
    fn rejects_bad_spans() {
        let k = EntityKind::Org;
        assert!(mask_entities("abc", &[EntitySpan::new(1, 4, k)]).is_err());
        assert!(mask_entities("abcdef", &[EntitySpan::new(0, 3, k), EntitySpan::new(2, 4, k)]).is_err());
        assert!(mask_entities("abc", &[EntitySpan::new(2, 2, k)]).is_err());
    }
}
