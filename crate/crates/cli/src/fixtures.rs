//! The toy fixture tree shipped under `fixtures/toy`, regenerated from the
//! templated corpus so tests can check the committed copy is current.

use std::collections::BTreeMap;

use marketstance_core::toy::{toy_corpus, toy_flip_replies, toy_markets, ToyCorpusSpec};
use serde_json::{json, Value};

pub const TOY_SPEC: ToyCorpusSpec = ToyCorpusSpec {
    pro: 60,
    anti: 30,
    neutral: 90,
};
pub const TOY_SEED: u64 = 7;
/// Listed in `markets.csv` but its record has no question.
pub const BROKEN_MARKET: &str = "election-night";

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("fixture json") + "\n"
}

/// Relative path to file contents. The API tree holds twelve good markets,
/// one malformed market, one blank comment and one repeated comment id.
pub fn toy_fixture_files() -> BTreeMap<String, String> {
    let bundle = toy_corpus(TOY_SPEC, TOY_SEED);
    let markets = toy_markets();
    let mut files = BTreeMap::new();

    let mut records: Vec<Value> = markets
        .iter()
        .map(|(m, _)| json!({ "id": m.market_id, "question": m.question, "active": true }))
        .collect();
    records.push(json!({ "id": BROKEN_MARKET, "active": true }));
    files.insert("api/markets.json".to_string(), pretty(&records));

    for (market, _) in &markets {
        let mut comments: Vec<Value> = bundle
            .examples
            .iter()
            .filter(|e| e.market_id() == market.market_id)
            .map(|e| json!({ "id": e.id(), "body": e.comment.text }))
            .collect();
        match market.market_id.as_str() {
            "super-bowl" => comments.push(json!({ "id": "blank-1", "body": "   " })),
            "pres-2024" => {
                let first = comments[0]["id"].clone();
                comments.push(json!({ "id": first, "body": "repeated listing" }));
            }
            _ => {}
        }
        files.insert(format!("api/comments/{}.json", market.market_id), pretty(&comments));
    }

    let mut markets_csv = String::from("market_id,domain\n");
    for (m, _) in &markets {
        markets_csv += &format!("{},{}\n", m.market_id, m.domain.as_str());
    }
    markets_csv += &format!("{BROKEN_MARKET},politics\n");
    files.insert("markets.csv".to_string(), markets_csv);

    let mut labels_csv = String::from("comment_id,label\n");
    for e in &bundle.examples {
        labels_csv += &format!("{},{}\n", e.id(), e.label.as_str());
    }
    files.insert("labels.csv".to_string(), labels_csv);

    let replies: BTreeMap<String, String> = toy_flip_replies(&bundle).into_iter().collect();
    files.insert("stub_replies.json".to_string(), pretty(&replies));
    files
}
