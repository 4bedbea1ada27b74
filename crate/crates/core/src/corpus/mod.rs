//! Corpus atoms, the line-delimited dataset store, ingestion and splitting.

mod ingest;
mod split;
mod store;
mod types;

pub use ingest::{
    ingest_comments, ingest_markets, open_source, parse_market, ApiConfig, CommentIngest, FixtureSource, HttpSource,
    IngestFailure, MarketIngest, MarketRequest, MarketSource,
};
pub use split::{
    allocate, class_distribution, project_two_class, stratified_split, ClassCount, ClassDistribution, SplitRatios,
};
pub use store::{read_bundle, read_jsonl, write_bundle, write_jsonl, SCHEMA_VERSION};
pub use types::{
    ClassScheme, Comment, DatasetBundle, Domain, LabeledExample, Market, Provenance, Split, StanceLabel, TextTransform,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("endpoint unreachable ({url}): {message}")]
    Unreachable { url: String, message: String },
    #[error("rate limited by {url} after {attempts} attempts")]
    RateLimited { url: String, attempts: u32 },
    #[error("unknown market `{0}`")]
    UnknownMarket(String),
    #[error("malformed response ({context}); payload: {excerpt}")]
    Parse { context: String, excerpt: String },
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("bundle is empty")]
    EmptyBundle,
    #[error("class {label} has {count} members; stratification needs at least 3")]
    Stratification { label: StanceLabel, count: usize },
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("bundle is already two-class; projection applied twice")]
    AlreadyTwoClass,
    #[error("dataset schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CorpusError {
    /// Transport-level failures worth retrying later.
    pub fn is_retryable(&self) -> bool {
        matches!(self, CorpusError::Unreachable { .. } | CorpusError::RateLimited { .. })
    }
}
