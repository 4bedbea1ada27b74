use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityKind {
    Person,
    Org,
    Gpe,
    Norp,
    Fac,
    Event,
    Product,
}

impl EntityKind {
    pub const ALL: [EntityKind; 7] = [
        EntityKind::Person,
        EntityKind::Org,
        EntityKind::Gpe,
        EntityKind::Norp,
        EntityKind::Fac,
        EntityKind::Event,
        EntityKind::Product,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "PERSON",
            EntityKind::Org => "ORG",
            EntityKind::Gpe => "GPE",
            EntityKind::Norp => "NORP",
            EntityKind::Fac => "FAC",
            EntityKind::Event => "EVENT",
            EntityKind::Product => "PRODUCT",
        }
    }
}

impl FromStr for EntityKind {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PreprocessError::Config(format!("unsupported entity kind `{s}`")))
    }
}

/// Character (not byte) span `[start, end)` of a recognised entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: EntityKind,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, kind: EntityKind) -> Self {
        Self { start, end, kind }
    }
}

pub trait NerProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Entity spans for one text, in any order.
    fn recognize(&self, text: &str) -> Result<Vec<EntitySpan>, PreprocessError>;

    fn recognize_batch(&self, texts: &[&str]) -> Result<Vec<Vec<EntitySpan>>, PreprocessError> {
        texts.iter().map(|t| self.recognize(t)).collect()
    }
}

/// Sorts spans by start and drops any span overlapping an earlier, longer one.
pub fn normalize_spans(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.retain(|s| s.start < s.end);
    spans.sort_by(|a, b| a.start.cmp(&b.start).then((b.end - b.start).cmp(&(a.end - a.start))));
    let mut out: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for span in spans {
        if out.last().map_or(true, |prev| span.start >= prev.end) {
            out.push(span);
        }
    }
    out
}

/// Recognises entities in `text`, returning sorted, non-overlapping spans.
pub fn recognize_entities(text: &str, recognizer: &dyn NerProvider) -> Result<Vec<EntitySpan>, PreprocessError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    Ok(normalize_spans(recognizer.recognize(text)?))
}

/// Gazetteer matcher over whole words, longest phrase wins.
///
/// Phrases match case-insensitively, except all-caps phrases and phrases of
/// three characters or fewer ("US", "Fed"), which must match exactly.
#[derive(Debug, Clone)]
pub struct DictionaryRecognizer {
    entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
struct Entry {
    phrase: Vec<char>,
    exact: bool,
    kind: EntityKind,
}

const DEFAULT_GAZETTEER: &str = include_str!("gazetteer.tsv");

impl DictionaryRecognizer {
    pub fn new(entries: impl IntoIterator<Item = (String, EntityKind)>) -> Self {
        let mut entries: Vec<Entry> = entries
            .into_iter()
            .filter(|(p, _)| !p.trim().is_empty())
            .map(|(p, kind)| {
                let p = p.trim();
                let exact = p.chars().count() <= 3 || !p.chars().any(char::is_lowercase);
                let phrase = if exact { p.chars().collect() } else { lower_chars(p) };
                Entry { phrase, exact, kind }
            })
            .collect();
        entries.sort_by(|a, b| {
            b.phrase
                .len()
                .cmp(&a.phrase.len())
                .then(a.phrase.cmp(&b.phrase))
                .then(b.exact.cmp(&a.exact))
        });
        entries.dedup_by(|a, b| a.phrase == b.phrase && a.exact == b.exact);
        Self { entries }
    }

    /// Tab-separated `phrase<TAB>KIND` lines; `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self, PreprocessError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, kind) = line.split_once('\t').ok_or_else(|| {
                PreprocessError::Config(format!("gazetteer line {}: expected phrase<TAB>KIND", i + 1))
            })?;
            entries.push((phrase.to_string(), kind.parse()?));
        }
        Ok(Self::new(entries))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PreprocessError::RecognizerUnavailable(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_tsv(&text)
    }

    /// Built-in gazetteer covering the people, places and groups common in
    /// election, sports and macro markets.
    pub fn with_default_gazetteer() -> Self {
        Self::from_tsv(DEFAULT_GAZETTEER).expect("bundled gazetteer parses")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-character lowercase that keeps the character count unchanged.
fn lower_chars(text: &str) -> Vec<char> {
    text.chars()
        .map(|c| {
            let mut l = c.to_lowercase();
            match (l.next(), l.next()) {
                (Some(one), None) => one,
                _ => c,
            }
        })
        .collect()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl NerProvider for DictionaryRecognizer {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn recognize(&self, text: &str) -> Result<Vec<EntitySpan>, PreprocessError> {
        let chars: Vec<char> = text.chars().collect();
        let lower = lower_chars(text);
        let mut spans = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if i > 0 && is_word_char(chars[i - 1]) {
                i += 1;
                continue;
            }
            let hit = self.entries.iter().find(|e| {
                let end = i + e.phrase.len();
                let haystack = if e.exact { &chars } else { &lower };
                end <= chars.len()
                    && haystack[i..end] == e.phrase[..]
                    && chars.get(end).map_or(true, |&c| !is_word_char(c))
            });
            match hit {
                Some(e) => {
                    spans.push(EntitySpan::new(i, i + e.phrase.len(), e.kind));
                    i += e.phrase.len();
                }
                None => i += 1,
            }
        }
        Ok(spans)
    }
}

const SPACY_SCRIPT: &str = r#"
import json, sys
import spacy
nlp = spacy.load(sys.argv[1])
keep = {"PERSON", "ORG", "GPE", "NORP", "FAC", "EVENT", "PRODUCT"}
texts = json.load(sys.stdin)
out = []
for doc in nlp.pipe(texts):
    out.append([[e.start_char, e.end_char, e.label_] for e in doc.ents if e.label_ in keep])
json.dump(out, sys.stdout)
"#;

/// spaCy pipeline run in a Python subprocess. Offsets are code-point based,
/// matching [`EntitySpan`].
#[derive(Debug, Clone)]
pub struct SpacyRecognizer {
    python: PathBuf,
    model: String,
}

impl SpacyRecognizer {
    pub const DEFAULT_MODEL: &'static str = "en_core_web_sm";

    /// Fails with a configuration error unless the interpreter can load `model`.
    pub fn new(python: impl Into<PathBuf>, model: impl Into<String>) -> Result<Self, PreprocessError> {
        let rec = Self {
            python: python.into(),
            model: model.into(),
        };
        let probe = Command::new(&rec.python)
            .args(["-c", "import spacy, sys; spacy.load(sys.argv[1])", &rec.model])
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| PreprocessError::RecognizerUnavailable(format!("{}: {e}", rec.python.display())))?;
        if !probe.status.success() {
            let err = String::from_utf8_lossy(&probe.stderr);
            return Err(PreprocessError::RecognizerUnavailable(format!(
                "spaCy model {} cannot be loaded: {}",
                rec.model,
                err.lines().last().unwrap_or("unknown error")
            )));
        }
        Ok(rec)
    }
}

impl NerProvider for SpacyRecognizer {
    fn name(&self) -> &str {
        &self.model
    }

    fn recognize(&self, text: &str) -> Result<Vec<EntitySpan>, PreprocessError> {
        Ok(self.recognize_batch(&[text])?.pop().unwrap_or_default())
    }

    fn recognize_batch(&self, texts: &[&str]) -> Result<Vec<Vec<EntitySpan>>, PreprocessError> {
        let unavailable = |m: String| PreprocessError::RecognizerUnavailable(m);
        let mut child = Command::new(&self.python)
            .args(["-c", SPACY_SCRIPT, &self.model])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(e.to_string()))?;
        let payload = serde_json::to_vec(texts).map_err(|e| unavailable(e.to_string()))?;
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(&payload)
            .map_err(|e| unavailable(e.to_string()))?;
        let output = child.wait_with_output().map_err(|e| unavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(unavailable(String::from_utf8_lossy(&output.stderr).into_owned()));
        }
        let raw: Vec<Vec<(usize, usize, String)>> =
            serde_json::from_slice(&output.stdout).map_err(|e| unavailable(format!("bad recognizer output: {e}")))?;
        raw.into_iter()
            .map(|doc| {
                doc.into_iter()
                    .map(|(s, e, k)| Ok(EntitySpan::new(s, e, k.parse()?)))
                    .collect()
            })
            .collect()
    }
}
