use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use marketstance_core::corpus::{
    ingest_comments, ingest_markets, ApiConfig, CorpusError, Domain, FixtureSource, HttpSource, MarketRequest,
    MarketSource,
};
use serde_json::json;

fn write_fixture(dir: &std::path::Path) {
    let markets = json!([
        {"id": "pres", "question": "Presidential Election Winner 2024?"},
        {"id": "super", "question": "Chiefs win the Super Bowl?"},
        {"id": "broken", "slug": "no-question-here"},
        {"id": 77, "question": "Fed decision in December?"}
    ]);
    std::fs::create_dir_all(dir.join("comments")).unwrap();
    std::fs::write(dir.join("markets.json"), markets.to_string()).unwrap();
    let many: Vec<_> = (0..200)
        .map(|i| json!({"id": format!("p{i}"), "body": format!("comment number {i}")}))
        .collect();
    std::fs::write(dir.join("comments/pres.json"), json!(many).to_string()).unwrap();
    let super_comments = json!([
        {"id": "s1", "body": "chiefs lock", "createdAt": "2024-02-01T10:00:00Z"},
        {"id": "s2", "body": "   "},
        {"id": "s1", "body": "chiefs lock again"},
        {"id": "s3", "text": "fading this"}
    ]);
    std::fs::write(dir.join("comments/super.json"), super_comments.to_string()).unwrap();
}

#[test]
fn fixture_ingestion_handles_pagination_blanks_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let source = FixtureSource::open(dir.path()).unwrap();
    let requests = [
        MarketRequest::new("pres", Domain::Politics),
        MarketRequest::new("super", Domain::Sports),
        MarketRequest::new("broken", Domain::Sports),
        MarketRequest::new("77", Domain::Finance),
        MarketRequest::new("missing", Domain::Finance),
    ];
    let got = ingest_markets(&requests, &source, 3).unwrap();
    let ids: Vec<&str> = got.markets.iter().map(|m| m.market_id.as_str()).collect();
    assert_eq!(ids, ["pres", "super", "77"]);
    let failed: Vec<&str> = got.failures.iter().map(|f| f.market_id.as_str()).collect();
    assert_eq!(failed, ["broken", "missing"]);
    assert!(got.failures[0].error.contains("no-question-here"));

    let pres = ingest_comments(&requests[0], &got.markets, &source, 30).unwrap();
    assert_eq!(pres.comments.len(), 200);
    assert_eq!(pres.comments[0].comment_id, "p0");
    assert_eq!(pres.comments[199].comment_id, "p199");
    let exact_pages = ingest_comments(&requests[0], &got.markets, &source, 100).unwrap();
    assert_eq!(exact_pages, pres);

    let sup = ingest_comments(&requests[1], &got.markets, &source, 100).unwrap();
    assert_eq!(sup.comments.len(), 2);
    assert_eq!(sup.dropped_blank, 1);
    assert_eq!(sup.duplicates, 1);
    assert_eq!(sup.comments[0].text, "chiefs lock");
    assert!(sup.comments[0].timestamp.is_some());

    let empty = ingest_comments(&requests[3], &got.markets, &source, 100).unwrap();
    assert!(empty.comments.is_empty());
    assert!(matches!(
        ingest_comments(&requests[4], &got.markets, &source, 100),
        Err(CorpusError::UnknownMarket(id)) if id == "missing"
    ));
}

/// Serves canned `(status, body)` replies in order, repeating the last one.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
            }
            let i = counter.fetch_add(1, Ordering::SeqCst).min(replies.len() - 1);
            let (status, body) = &replies[i];
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (format!("http://{addr}"), hits)
}

fn http_config(base: &str) -> ApiConfig {
    ApiConfig {
        markets_base_url: base.to_string(),
        comments_base_url: base.to_string(),
        max_retries: 2,
        backoff_base_ms: 5,
        backoff_max_ms: 20,
        min_request_interval_ms: 0,
        timeout_secs: 5,
        ..Default::default()
    }
}

#[test]
fn rate_limited_request_is_retried() {
    let ok = json!({"id": "m1", "question": "Will it rain?"}).to_string();
    let (base, hits) = serve(vec![(429, String::new()), (200, ok)]);
    let source = HttpSource::new(http_config(&base)).unwrap();
    let got = ingest_markets(&[MarketRequest::new("m1", Domain::Politics)], &source, 1).unwrap();
    assert_eq!(got.markets[0].question, "Will it rain?");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn persistent_rate_limit_names_url_and_attempts() {
    let (base, hits) = serve(vec![(429, String::new())]);
    let source = HttpSource::new(http_config(&base)).unwrap();
    match source.market_record("m1") {
        Err(CorpusError::RateLimited { url, attempts }) => {
            assert!(url.ends_with("/markets/m1"));
            assert_eq!(attempts, 3);
        }
        other => panic!("expected rate limit, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn not_found_is_an_unknown_market_failure() {
    let (base, hits) = serve(vec![(404, String::new())]);
    let source = HttpSource::new(http_config(&base)).unwrap();
    let got = ingest_markets(&[MarketRequest::new("gone", Domain::Sports)], &source, 1).unwrap();
    assert!(got.markets.is_empty());
    assert_eq!(got.failures[0].market_id, "gone");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_body_reports_an_excerpt() {
    let (base, _) = serve(vec![(200, "<html>maintenance</html>".into())]);
    let source = HttpSource::new(http_config(&base)).unwrap();
    match source.comment_page("m1", 0, 10) {
        Err(CorpusError::Parse { excerpt, .. }) => assert!(excerpt.contains("maintenance")),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn unreachable_host_aborts_ingestion() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let source = HttpSource::new(http_config(&format!("http://127.0.0.1:{port}"))).unwrap();
    let err = ingest_markets(&[MarketRequest::new("m1", Domain::Politics)], &source, 1).unwrap_err();
    match err {
        CorpusError::Unreachable { url, .. } => assert!(url.contains(&port.to_string())),
        other => panic!("expected unreachable, got {other:?}"),
    }
}

#[test]
fn comment_pages_use_offset_and_data_envelope() {
    let page = json!({"data": [{"id": "c1", "body": "yes"}]}).to_string();
    let (base, _) = serve(vec![(200, page)]);
    let source = HttpSource::new(http_config(&base)).unwrap();
    let items = source.comment_page("m1", 0, 10).unwrap();
    assert_eq!(items.len(), 1);
}
