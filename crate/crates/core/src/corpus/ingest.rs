//! Market and comment ingestion from REST endpoints or a fixture directory.
//!
//! Fixture layout: `<dir>/markets.json` holds an array of market records and
//! `<dir>/comments/<parent id>.json` an array of comment records per market.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Comment, CorpusError, Domain, Market};
use crate::util::{excerpt, parallel_map, RateLimiter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    pub markets_base_url: String,
    pub comments_base_url: String,
    pub bearer_token: Option<String>,
    pub page_size: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub parallelism: usize,
    pub min_request_interval_ms: u64,
    pub timeout_secs: u64,
    /// `parent_entity_type` query value for comment listings.
    pub comment_parent_type: String,
    /// When set, records are read from this directory instead of HTTP.
    pub fixtures: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            markets_base_url: "https://gamma-api.polymarket.com".into(),
            comments_base_url: "https://gamma-api.polymarket.com".into(),
            bearer_token: None,
            page_size: 100,
            max_retries: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            parallelism: 4,
            min_request_interval_ms: 100,
            timeout_secs: 30,
            comment_parent_type: "market".into(),
            fixtures: None,
        }
    }
}

/// One market to ingest; the domain tag is assigned by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketRequest {
    pub market_id: String,
    pub domain: Domain,
    /// Entity whose comment thread belongs to this market, if not the market itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment_parent_id: Option<String>,
}

impl MarketRequest {
    pub fn new(market_id: impl Into<String>, domain: Domain) -> Self {
        Self {
            market_id: market_id.into(),
            domain,
            comment_parent_id: None,
        }
    }

    pub fn comment_parent(&self) -> &str {
        self.comment_parent_id.as_deref().unwrap_or(&self.market_id)
    }
}

/// Raw record access; implementations must be shareable across ingestion
/// worker threads.
pub trait MarketSource: Sync {
    fn market_record(&self, market_id: &str) -> Result<Value, CorpusError>;

    fn comment_page(&self, parent_id: &str, offset: usize, limit: usize) -> Result<Vec<Value>, CorpusError>;
}

pub struct FixtureSource {
    dir: PathBuf,
    markets: Vec<Value>,
}

impl FixtureSource {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join("markets.json");
        let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::Unreachable {
            url: path.display().to_string(),
            message: e.to_string(),
        })?;
        let markets = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Array(items)) => items,
            Ok(_) => {
                return Err(CorpusError::Parse {
                    context: "markets.json must hold an array".into(),
                    excerpt: excerpt(&text),
                })
            }
            Err(e) => {
                return Err(CorpusError::Parse {
                    context: format!("markets.json: {e}"),
                    excerpt: excerpt(&text),
                })
            }
        };
        Ok(Self { dir, markets })
    }
}

fn record_id(v: &Value) -> Option<String> {
    ["id", "market_id", "marketId"].iter().find_map(|k| match v.get(*k)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

impl MarketSource for FixtureSource {
    fn market_record(&self, market_id: &str) -> Result<Value, CorpusError> {
        self.markets
            .iter()
            .find(|m| record_id(m).as_deref() == Some(market_id))
            .cloned()
            .ok_or_else(|| CorpusError::UnknownMarket(market_id.to_string()))
    }

    fn comment_page(&self, parent_id: &str, offset: usize, limit: usize) -> Result<Vec<Value>, CorpusError> {
        let path = self.dir.join("comments").join(format!("{parent_id}.json"));
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = std::fs::read_to_string(&path)?;
        let all = comment_items(&text, &path.display().to_string())?;
        Ok(all.into_iter().skip(offset).take(limit).collect())
    }
}

fn comment_items(body: &str, context: &str) -> Result<Vec<Value>, CorpusError> {
    let parsed: Value = serde_json::from_str(body).map_err(|e| CorpusError::Parse {
        context: format!("{context}: {e}"),
        excerpt: excerpt(body),
    })?;
    match parsed {
        Value::Array(items) => Ok(items),
        Value::Object(mut obj) => match obj.remove("data").or_else(|| obj.remove("comments")) {
            Some(Value::Array(items)) => Ok(items),
            _ => Err(CorpusError::Parse {
                context: format!("{context}: expected an array of comments"),
                excerpt: excerpt(body),
            }),
        },
        _ => Err(CorpusError::Parse {
            context: format!("{context}: expected an array of comments"),
            excerpt: excerpt(body),
        }),
    }
}

pub struct HttpSource {
    client: reqwest::blocking::Client,
    config: ApiConfig,
    limiter: RateLimiter,
}

enum Attempt {
    Done(String),
    NotFound,
    Fail(CorpusError),
    Retry(CorpusError),
}

impl HttpSource {
    pub fn new(config: ApiConfig) -> Result<Self, CorpusError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .user_agent("marketstance/0.1")
            .build()
            .map_err(|e| CorpusError::Unreachable {
                url: config.markets_base_url.clone(),
                message: e.to_string(),
            })?;
        let limiter = RateLimiter::new(Duration::from_millis(config.min_request_interval_ms));
        Ok(Self {
            client,
            config,
            limiter,
        })
    }

    fn attempt(&self, url: &str, query: &[(&str, String)]) -> Attempt {
        self.limiter.acquire();
        let mut req = self.client.get(url).query(query);
        if let Some(token) = &self.config.bearer_token {
            req = req.bearer_auth(token);
        }
        match req.send() {
            Err(e) => Attempt::Retry(CorpusError::Unreachable {
                url: url.to_string(),
                message: e.to_string(),
            }),
            Ok(resp) => {
                let status = resp.status();
                if status == reqwest::StatusCode::NOT_FOUND {
                    Attempt::NotFound
                } else if status == reqwest::StatusCode::TOO_MANY_REQUESTS {
                    Attempt::Retry(CorpusError::RateLimited {
                        url: url.to_string(),
                        attempts: 0,
                    })
                } else if status.is_server_error() {
                    Attempt::Retry(CorpusError::Unreachable {
                        url: url.to_string(),
                        message: format!("HTTP {status}"),
                    })
                } else if !status.is_success() {
                    let body = resp.text().unwrap_or_default();
                    Attempt::Fail(CorpusError::Parse {
                        context: format!("{url} returned HTTP {status}"),
                        excerpt: excerpt(&body),
                    })
                } else {
                    match resp.text() {
                        Ok(body) => Attempt::Done(body),
                        Err(e) => Attempt::Retry(CorpusError::Unreachable {
                            url: url.to_string(),
                            message: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    /// GET with bounded exponential backoff on transport errors, 429 and 5xx.
    /// `Ok(None)` means HTTP 404.
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<Option<String>, CorpusError> {
        let mut last = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self
                    .config
                    .backoff_base_ms
                    .saturating_mul(1 << (attempt - 1).min(20))
                    .min(self.config.backoff_max_ms);
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(url, query) {
                Attempt::Done(body) => return Ok(Some(body)),
                Attempt::NotFound => return Ok(None),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::debug!("attempt {} for {url} failed: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        let attempts = self.config.max_retries + 1;
        Err(match last {
            Some(CorpusError::RateLimited { url, .. }) => CorpusError::RateLimited { url, attempts },
            Some(e) => e,
            None => CorpusError::Unreachable {
                url: url.to_string(),
                message: "no attempts made".into(),
            },
        })
    }
}

impl MarketSource for HttpSource {
    fn market_record(&self, market_id: &str) -> Result<Value, CorpusError> {
        let url = format!(
            "{}/markets/{market_id}",
            self.config.markets_base_url.trim_end_matches('/')
        );
        let body = self
            .get(&url, &[])?
            .ok_or_else(|| CorpusError::UnknownMarket(market_id.to_string()))?;
        serde_json::from_str(&body).map_err(|e| CorpusError::Parse {
            context: format!("{url}: {e}"),
            excerpt: excerpt(&body),
        })
    }

    fn comment_page(&self, parent_id: &str, offset: usize, limit: usize) -> Result<Vec<Value>, CorpusError> {
        let url = format!("{}/comments", self.config.comments_base_url.trim_end_matches('/'));
        let query = [
            ("parent_entity_type", self.config.comment_parent_type.clone()),
            ("parent_entity_id", parent_id.to_string()),
            ("limit", limit.to_string()),
            ("offset", offset.to_string()),
        ];
        match self.get(&url, &query)? {
            Some(body) => comment_items(&body, &url),
            None => Err(CorpusError::UnknownMarket(parent_id.to_string())),
        }
    }
}

/// Builds the configured source: fixtures when a directory is set, HTTP otherwise.
pub fn open_source(config: &ApiConfig) -> Result<Box<dyn MarketSource>, CorpusError> {
    match &config.fixtures {
        Some(dir) => Ok(Box::new(FixtureSource::open(dir)?)),
        None => Ok(Box::new(HttpSource::new(config.clone())?)),
    }
}

/// Turns one raw market record into a [`Market`]. The `question` field is required.
pub fn parse_market(record: &Value, request: &MarketRequest) -> Result<Market, CorpusError> {
    let question = record
        .get("question")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .ok_or_else(|| CorpusError::Parse {
            context: format!("market {} lacks a non-empty `question`", request.market_id),
            excerpt: excerpt(&record.to_string()),
        })?;
    Market::new(request.market_id.clone(), question, request.domain)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestFailure {
    pub market_id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct MarketIngest {
    pub markets: Vec<Market>,
    pub failures: Vec<IngestFailure>,
}

/// Fetches every requested market, at most `parallelism` at a time.
///
/// Unknown ids and malformed records become per-id failures; a transport or
/// rate-limit failure that outlives the retry budget aborts the whole call.
pub fn ingest_markets(
    requests: &[MarketRequest],
    source: &dyn MarketSource,
    parallelism: usize,
) -> Result<MarketIngest, CorpusError> {
    let results = parallel_map(requests, parallelism, |req| {
        source
            .market_record(&req.market_id)
            .and_then(|record| parse_market(&record, req))
    });
    let mut out = MarketIngest::default();
    for (req, result) in requests.iter().zip(results) {
        match result {
            Ok(market) => out.markets.push(market),
            Err(e) if e.is_retryable() => return Err(e),
            Err(e) => {
                log::warn!("market {}: {e}", req.market_id);
                out.failures.push(IngestFailure {
                    market_id: req.market_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CommentIngest {
    pub comments: Vec<Comment>,
    pub dropped_blank: usize,
    pub duplicates: usize,
}

fn parse_comment(record: &Value, market_id: &str) -> Result<Comment, CorpusError> {
    let comment_id = record_id(record).ok_or_else(|| CorpusError::Parse {
        context: format!("comment for market {market_id} has no id"),
        excerpt: excerpt(&record.to_string()),
    })?;
    let text = ["body", "text", "content"]
        .iter()
        .find_map(|k| record.get(*k).and_then(Value::as_str))
        .unwrap_or_default()
        .to_string();
    let timestamp = ["createdAt", "created_at", "timestamp"]
        .iter()
        .find_map(|k| record.get(*k).and_then(Value::as_str))
        .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&Utc));
    Ok(Comment {
        comment_id,
        market_id: market_id.to_string(),
        text,
        timestamp,
    })
}

/// Pages through the comment listing of one already-ingested market.
///
/// Comments keep their listing order; repeated ids keep the first copy and
/// blank texts are dropped and counted.
pub fn ingest_comments(
    request: &MarketRequest,
    known_markets: &[Market],
    source: &dyn MarketSource,
    page_size: usize,
) -> Result<CommentIngest, CorpusError> {
    if !known_markets.iter().any(|m| m.market_id == request.market_id) {
        return Err(CorpusError::UnknownMarket(request.market_id.clone()));
    }
    let page_size = page_size.max(1);
    let mut out = CommentIngest::default();
    let mut seen = HashSet::new();
    let mut offset = 0;
    loop {
        let page = source.comment_page(request.comment_parent(), offset, page_size)?;
        let n = page.len();
        for record in &page {
            let comment = parse_comment(record, &request.market_id)?;
            if comment.text.trim().is_empty() {
                out.dropped_blank += 1;
            } else if !seen.insert(comment.comment_id.clone()) {
                out.duplicates += 1;
            } else {
                out.comments.push(comment);
            }
        }
        if n < page_size {
            break;
        }
        offset += n;
    }
    if out.dropped_blank > 0 {
        log::info!(
            "market {}: dropped {} blank comments",
            request.market_id,
            out.dropped_blank
        );
    }
    Ok(out)
}
