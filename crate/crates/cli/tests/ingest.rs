mod common;

use std::collections::BTreeMap;

use marketstance_cli::config::CorpusSettings;
use marketstance_cli::fixtures::BROKEN_MARKET;
use marketstance_cli::stages;
use marketstance_core::corpus::DatasetBundle;

fn toy_corpus_settings() -> CorpusSettings {
    common::toy_config(std::path::Path::new("unused")).corpus
}

#[test]
fn ingest_tolerates_the_broken_market_and_comment_anomalies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ingest");
    let (report, files) = stages::ingest(&toy_corpus_settings(), &out).unwrap();
    assert_eq!(report.markets_requested, 13);
    assert_eq!(report.markets_ingested, 12);
    assert_eq!(report.examples, 180);

    let failed: Vec<_> = report.markets.iter().filter(|m| m.error.is_some()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].market_id, BROKEN_MARKET);
    assert_eq!(report.markets.iter().map(|m| m.dropped_blank).sum::<usize>(), 1);
    assert_eq!(report.markets.iter().map(|m| m.duplicates).sum::<usize>(), 1);

    let mut domains: BTreeMap<&str, usize> = BTreeMap::new();
    for m in report.markets.iter().filter(|m| m.error.is_none()) {
        *domains.entry(m.domain.unwrap().as_str()).or_default() += 1;
    }
    assert_eq!(
        domains,
        BTreeMap::from([("finance", 2), ("politics", 5), ("sports", 5)])
    );

    for name in [
        "dataset.jsonl",
        "ingest_report.json",
        "class_distribution.csv",
        "stance_by_domain.csv",
    ] {
        assert!(files.contains(&out.join(name)), "missing {name}");
    }
    let bundle = DatasetBundle::load(out.join("dataset.jsonl")).unwrap();
    assert_eq!(bundle.examples.len(), 180);
    assert_eq!(bundle.markets.len(), 12);
}

#[test]
fn conflicting_duplicate_labels_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("labels.csv");
    std::fs::write(&path, "comment_id,label\nc1,Pro\nc1,Anti\n").unwrap();
    assert!(stages::read_labels(&path).is_err());
    std::fs::write(&path, "comment_id,label\nc1,Pro\nc1,Pro\n").unwrap();
    assert_eq!(stages::read_labels(&path).unwrap().len(), 1);
}

#[test]
fn outputs_may_not_contain_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("dataset.jsonl");
    std::fs::write(&input, "").unwrap();
    assert!(stages::ensure_not_input(tmp.path(), &[&input]).is_err());
    assert!(stages::ensure_not_input(&tmp.path().join("elsewhere"), &[&input]).is_ok());
}
