//! Line-delimited JSON dataset files.
//!
//! The first line is a header `{"schema_version", "scheme", "markets", ...}`;
//! every following line is one example record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ClassScheme, Comment, CorpusError, DatasetBundle, LabeledExample, Market, Provenance, Split, StanceLabel,
    TextTransform,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    scheme: ClassScheme,
    markets: Vec<Market>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<TextTransform>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    comment_id: String,
    market_id: String,
    text: String,
    label: StanceLabel,
    provenance: Provenance,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<DateTime<Utc>>,
}

impl From<&LabeledExample> for Record {
    fn from(ex: &LabeledExample) -> Self {
        Record {
            comment_id: ex.comment.comment_id.clone(),
            market_id: ex.comment.market_id.clone(),
            text: ex.comment.text.clone(),
            label: ex.label,
            provenance: ex.provenance,
            split: ex.split,
            timestamp: ex.comment.timestamp,
        }
    }
}

impl From<Record> for LabeledExample {
    fn from(r: Record) -> Self {
        LabeledExample {
            comment: Comment {
                comment_id: r.comment_id,
                market_id: r.market_id,
                text: r.text,
                timestamp: r.timestamp,
            },
            label: r.label,
            provenance: r.provenance,
            split: r.split,
        }
    }
}

pub fn write_bundle(bundle: &DatasetBundle, out: impl Write) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(out);
    let header = Header {
        schema_version: SCHEMA_VERSION,
        scheme: bundle.scheme,
        markets: bundle.markets.clone(),
        transform: bundle.transform.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for ex in &bundle.examples {
        serde_json::to_writer(&mut out, &Record::from(ex))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bundle(input: impl BufRead) -> Result<DatasetBundle, CorpusError> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| CorpusError::Schema {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| CorpusError::Schema {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(CorpusError::Schema {
            line: 1,
            message: format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                header.schema_version
            ),
        });
    }
    let mut examples = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        examples.push(record.into());
    }
    let bundle = DatasetBundle {
        examples,
        scheme: header.scheme,
        markets: header.markets,
        transform: header.transform,
    };
    bundle.validate()?;
    Ok(bundle)
}

impl DatasetBundle {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_bundle(self, File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let file = File::open(path.as_ref()).map_err(|e| {
            CorpusError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.as_ref().display()),
            ))
        })?;
        read_bundle(BufReader::new(file))
    }
}

/// Writes any serialisable items as one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), CorpusError> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
