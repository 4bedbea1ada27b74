use marketstance_core::corpus::{Comment, DatasetBundle, Domain, LabeledExample, Market, StanceLabel};
use marketstance_core::preprocess::{
    build_model_input, mask_bundle, mask_entities, mask_text, split_context_input, DictionaryRecognizer, EntityKind,
    EntitySpan, InputOptions, PreprocessError, SpacyRecognizer, COMMENT_DELIMITER, ENTITY_TOKEN,
};
use marketstance_core::toy::{toy_corpus, ToyCorpusSpec};
use proptest::prelude::*;

const PIECES: [&str; 12] = [
    "Trump",
    "Harris",
    "South Korea",
    "Chiefs",
    "Fed",
    "lol",
    "is",
    "cooked",
    "the",
    "moon",
    "us",
    "fed up",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(PIECES.to_vec()), 0..12).prop_map(|w| w.join(" "))
}

fn market() -> Market {
    Market::new("kr", "Next president of South Korea?", Domain::Politics).unwrap()
}

#[test]
fn masks_entities_and_reports_counts() {
    let rec = DictionaryRecognizer::with_default_gazetteer();
    assert_eq!(
        mask_text("Trump and Harris in Ohio", &rec).unwrap(),
        "ENTITY and ENTITY in ENTITY"
    );
    assert_eq!(mask_text("fed up with us", &rec).unwrap(), "fed up with us");
    let bundle = toy_corpus(
        ToyCorpusSpec {
            pro: 6,
            anti: 6,
            neutral: 6,
        },
        1,
    );
    let (masked, report) = mask_bundle(&bundle, &rec).unwrap();
    assert_eq!(report.total_comments, 18);
    assert!(report.total_entities() >= report.masked_comments);
    assert!(masked.transform.as_ref().unwrap().masked);
    assert_eq!(masked.len(), bundle.len());
    assert!(matches!(mask_bundle(&masked, &rec), Err(PreprocessError::Config(_))));
    let dir = tempfile::tempdir().unwrap();
    report.write_csv(dir.path().join("masking.csv")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("masking.csv")).unwrap();
    assert!(csv.starts_with("market_id,kind,count"));
}

#[test]
fn invalid_spans_are_rejected() {
    let s = |a, b| EntitySpan::new(a, b, EntityKind::Person);
    assert!(matches!(
        mask_entities("abc", &[s(1, 5)]),
        Err(PreprocessError::InvalidSpan { .. })
    ));
    assert!(matches!(
        mask_entities("abcdef", &[s(0, 3), s(2, 4)]),
        Err(PreprocessError::InvalidSpan { .. })
    ));
    assert_eq!(mask_entities("héllo wörld", &[s(6, 11)]).unwrap(), "héllo ENTITY");
}

#[test]
fn masking_without_recognizer_fails() {
    let ex = LabeledExample::real(Comment::new("c", "kr", "Yoo Seong moving"), StanceLabel::Pro);
    let options = InputOptions {
        mask: true,
        ..Default::default()
    };
    assert!(matches!(
        build_model_input(&ex, &market(), options, None),
        Err(PreprocessError::RecognizerUnavailable(_))
    ));
}

#[test]
fn question_stays_unmasked_by_default() {
    let rec = DictionaryRecognizer::with_default_gazetteer();
    let ex = LabeledExample::real(Comment::new("c", "kr", "Yoo Seong moving"), StanceLabel::Pro);
    let options = InputOptions {
        mask: true,
        ..Default::default()
    };
    let input = build_model_input(&ex, &market(), options, Some(&rec)).unwrap();
    assert_eq!(
        input.text,
        "Market: Next president of South Korea? Comment: ENTITY moving"
    );
    let both = InputOptions {
        mask_question: true,
        ..options
    };
    let input = build_model_input(&ex, &market(), both, Some(&rec)).unwrap();
    assert_eq!(input.text, "Market: Next president of ENTITY? Comment: ENTITY moving");
}

#[test]
fn wrong_market_is_a_linkage_error() {
    let ex = LabeledExample::real(Comment::new("c", "other", "hi there"), StanceLabel::Pro);
    assert!(matches!(
        build_model_input(&ex, &market(), InputOptions::default(), None),
        Err(PreprocessError::Linkage { .. })
    ));
}

#[test]
fn spacy_is_either_usable_or_reported_unavailable() {
    if let Err(e) = SpacyRecognizer::new("python3", SpacyRecognizer::DEFAULT_MODEL) {
        assert!(matches!(e, PreprocessError::RecognizerUnavailable(_)), "{e}");
    }
    assert!(matches!(
        SpacyRecognizer::new("/nonexistent/python", "x"),
        Err(PreprocessError::RecognizerUnavailable(_))
    ));
}

#[test]
fn masked_bundle_still_validates() {
    let rec = DictionaryRecognizer::with_default_gazetteer();
    let bundle = toy_corpus(
        ToyCorpusSpec {
            pro: 5,
            anti: 5,
            neutral: 5,
        },
        3,
    );
    let (masked, _) = mask_bundle(&bundle, &rec).unwrap();
    let again = DatasetBundle::new(masked.examples.clone(), masked.scheme, masked.markets.clone()).unwrap();
    assert_eq!(again.len(), 15);
}

proptest! {
    #[test]
    fn masking_is_idempotent_and_uses_entity_token(text in text_strategy()) {
        let rec = DictionaryRecognizer::with_default_gazetteer();
        let once = mask_text(&text, &rec).unwrap();
        prop_assert_eq!(&mask_text(&once, &rec).unwrap(), &once);
        prop_assert!(!once.contains("[MASK]") && !once.contains("<mask>"));
        let entities = ["Trump", "Harris", "South Korea", "Chiefs", "Fed"];
        prop_assert!(entities.iter().all(|e| !once.contains(e)));
        let expected = text.split_whitespace().filter(|w| ["Trump", "Harris", "Chiefs", "Fed", "South"].contains(w)).count();
        prop_assert_eq!(once.matches(ENTITY_TOKEN).count(), expected);
    }

    #[test]
    fn context_input_parses_back(
        question in "[A-Za-z0-9 ?]{1,40}",
        comment in "[A-Za-z0-9 !:]{1,60}",
    ) {
        prop_assume!(!question.trim().is_empty() && !comment.trim().is_empty());
        prop_assume!(!comment.contains(COMMENT_DELIMITER) && !question.contains(COMMENT_DELIMITER));
        let m = Market::new("m", question.clone(), Domain::Sports).unwrap();
        let ex = LabeledExample::real(Comment::new("c", "m", comment.clone()), StanceLabel::Neutral);
        let input = build_model_input(&ex, &m, InputOptions::default(), None).unwrap();
        prop_assert_eq!(split_context_input(&input.text), Some((question.as_str(), comment.as_str())));
        prop_assert_eq!(&input.text[input.question_span.clone()], format!("Market: {question}"));
        prop_assert_eq!(input.question_span.end, input.comment_span.start);
        prop_assert_eq!(input.comment_span.end, input.text.len());
        let plain = build_model_input(&ex, &m, InputOptions { with_context: false, ..Default::default() }, None).unwrap();
        prop_assert_eq!(plain.text, comment);
    }
}
