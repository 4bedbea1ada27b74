//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the conditional full-scale reproduction prints SKIP unless its inputs exist.

mod common;

use std::collections::HashSet;
use std::time::Instant;

use common::{
    fast_config, hand_cls_average, hand_model, oracle_confusion, oracle_scores, split_toy, toy_pool, FILTER_CASES,
    HAND_WORDS, SMALL,
};
use marketstance_core::augment::{check_no_leakage, dose_count, mix_dose, quality_verdict, RejectionRule};
use marketstance_core::corpus::{
    project_two_class, stratified_split, ClassScheme, DatasetBundle, Provenance, Split, SplitRatios, StanceLabel,
};
use marketstance_core::evaluate::{
    accuracy, confusion_matrix, evaluate_labels, macro_f1, per_class_prf, run_ablation, write_ablation_reports,
    AblationConfig, SchemeBundles,
};
use marketstance_core::interpret::extract_cls_attention;
use marketstance_core::preprocess::{build_model_input, InputOptions};
use marketstance_core::toy::{toy_corpus, ToyCorpusSpec};
use marketstance_core::trainer::{
    compute_class_weights, train, train_with_scorer, weighted_ce_loss, weighted_ce_with_grad, TrainConfig,
    TrainedModel, TrainingData,
};
use marketstance_nn::{EncoderConfig, Mode, SequenceClassifier};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn class_weights() -> Check {
    let w = compute_class_weights(&[
        (StanceLabel::Pro, 628),
        (StanceLabel::Anti, 194),
        (StanceLabel::Neutral, 1407),
    ])
    .map_err(|e| e.to_string())?;
    let get = |l| w.get(l).unwrap();
    let (p, a, n) = (get(StanceLabel::Pro), get(StanceLabel::Anti), get(StanceLabel::Neutral));
    ensure((p - 1.18).abs() <= 0.01, format!("Pro weight {p}"))?;
    ensure((3.82 - 0.01..=3.83 + 0.01).contains(&a), format!("Anti weight {a}"))?;
    ensure((n - 0.53).abs() <= 0.01, format!("Neutral weight {n}"))?;
    for k in [1usize, 7, 500] {
        let balanced =
            compute_class_weights(&[(StanceLabel::Pro, k), (StanceLabel::Anti, k), (StanceLabel::Neutral, k)])
                .map_err(|e| e.to_string())?;
        ensure(
            balanced.weights == vec![1.0; 3],
            format!("balanced weights {:?}", balanced.weights),
        )?;
    }
    Ok(format!("Pro {p:.3}, Anti {a:.3}, Neutral {n:.3}"))
}

fn split_sizes(bundle: &DatasetBundle) -> Vec<usize> {
    Split::ASSIGNED.iter().map(|&s| bundle.split_len(s)).collect()
}

fn max_quota_deviation(original: &DatasetBundle, split: &DatasetBundle) -> f64 {
    let sizes = split_sizes(split);
    let mut worst: f64 = 0.0;
    for (k, &s) in Split::ASSIGNED.iter().enumerate() {
        for &label in split.scheme.labels() {
            let quota = original.count_label(label) as f64 * sizes[k] as f64 / original.len() as f64;
            let got = split.split(s).filter(|e| e.label == label).count() as f64;
            worst = worst.max((got - quota).abs());
        }
    }
    worst
}

fn split_exactness() -> Check {
    let three = toy_corpus(ToyCorpusSpec::FULL_SCALE, 0);
    let two = project_two_class(&three).map_err(|e| e.to_string())?;
    let s3 = stratified_split(&three, SplitRatios::default(), 42).map_err(|e| e.to_string())?;
    let s2 = stratified_split(&two, SplitRatios::default(), 42).map_err(|e| e.to_string())?;
    ensure(
        split_sizes(&s3) == [1559, 335, 335],
        format!("3-class sizes {:?}", split_sizes(&s3)),
    )?;
    ensure(
        split_sizes(&s2) == [574, 124, 124],
        format!("2-class sizes {:?}", split_sizes(&s2)),
    )?;
    let d3 = max_quota_deviation(&three, &s3);
    let d2 = max_quota_deviation(&two, &s2);
    ensure(d3 <= 1.0 && d2 <= 1.0, format!("class deviation {d3} / {d2}"))?;
    Ok(format!(
        "1559/335/335 and 574/124/124, max class deviation {:.2}",
        d3.max(d2)
    ))
}

fn filter_suite() -> Check {
    for (orig, gen, expected) in FILTER_CASES {
        let v = quality_verdict(orig, gen);
        ensure(
            v.rejected_by == expected,
            format!("{gen:?}: got {:?}, want {expected:?}", v.rejected_by),
        )?;
    }
    let covered: HashSet<_> = FILTER_CASES.iter().filter_map(|c| c.2).collect();
    ensure(
        covered.len() == RejectionRule::ORDER.len(),
        "suite misses a rejection rule",
    )?;
    ensure(
        FILTER_CASES[0].2.is_none() && quality_verdict(FILTER_CASES[0].0, FILTER_CASES[0].1).accepted,
        "accepted pair",
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab = [
        "trump", "wins", "lol", "fed", "cuts", "moon", "chiefs", "no", "way", "yes",
    ];
    for _ in 0..200 {
        let n = rng.gen_range(3..15);
        let text: Vec<&str> = (0..n).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
        let text = text.join(" ");
        ensure(
            quality_verdict(&text, &text).rejected_by == Some(RejectionRule::EchoOverlap),
            format!("self-echo accepted: {text}"),
        )?;
    }

    let mut shuffled = FILTER_CASES.to_vec();
    shuffled.shuffle(&mut rng);
    for (orig, gen, _) in &shuffled {
        ensure(
            quality_verdict(orig, gen) == quality_verdict(orig, gen),
            "verdict not deterministic",
        )?;
    }
    // min length, meta and ratio all fail; the earliest rule in order wins
    let v = quality_verdict("a", "Sure");
    ensure(
        v.rejected_by == Some(RejectionRule::MinLength),
        format!("order: {:?}", v.rejected_by),
    )?;
    let v = quality_verdict("a", "Here is more text than before");
    ensure(
        v.rejected_by == Some(RejectionRule::MetaCommentary),
        format!("order: {:?}", v.rejected_by),
    )?;
    Ok(format!(
        "{} cases, 200 self-echoes rejected, rule order fixed",
        FILTER_CASES.len()
    ))
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let c = if i % 2 == 0 { 2 } else { 3 };
        let n = rng.gen_range(1..=50);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let err = |e: marketstance_core::evaluate::EvalError| e.to_string();
        ensure(
            confusion_matrix(&preds, &golds, c).map_err(err)? == oracle_confusion(&preds, &golds, c),
            format!("confusion, instance {i}"),
        )?;
        let (per, acc) = oracle_scores(&preds, &golds, c);
        let prf = per_class_prf(&preds, &golds, c).map_err(err)?;
        for (got, want) in prf.iter().zip(&per) {
            ensure(
                (got.precision, got.recall, got.f1) == *want,
                format!("P/R/F1, instance {i}"),
            )?;
        }
        ensure(
            accuracy(&preds, &golds, c).map_err(err)? == acc,
            format!("accuracy, instance {i}"),
        )?;
        let mean = per.iter().map(|p| p.2).sum::<f64>() / c as f64;
        ensure(
            macro_f1(&preds, &golds, c).map_err(err)? == mean,
            format!("macro F1, instance {i}"),
        )?;
    }
    let golds: Vec<StanceLabel> = [
        (StanceLabel::Pro, 628),
        (StanceLabel::Anti, 194),
        (StanceLabel::Neutral, 1407),
    ]
    .into_iter()
    .flat_map(|(l, n)| std::iter::repeat(l).take(n))
    .collect();
    let preds = vec![StanceLabel::Neutral; golds.len()];
    let r = evaluate_labels(ClassScheme::ThreeClass, &preds, &golds).map_err(|e| e.to_string())?;
    ensure(
        (r.accuracy - 0.631).abs() <= 0.001,
        format!("majority accuracy {}", r.accuracy),
    )?;
    ensure(
        (r.macro_f1 - 0.258).abs() <= 0.001,
        format!("majority macro F1 {}", r.macro_f1),
    )?;
    Ok(format!(
        "1000 instances exact; majority accuracy {:.4}, macro F1 {:.4}",
        r.accuracy, r.macro_f1
    ))
}

/// Weighted CE of a batch through the full stand-in encoder.
fn batch_loss(model: &SequenceClassifier, batch: &[(Vec<u32>, usize)], weights: &[f64]) -> f64 {
    let mut logits = Array2::zeros((batch.len(), weights.len()));
    for (r, (ids, _)) in batch.iter().enumerate() {
        logits
            .row_mut(r)
            .assign(model.forward(ids, Mode::Eval).unwrap().logits());
    }
    let labels: Vec<usize> = batch.iter().map(|b| b.1).collect();
    weighted_ce_loss(&logits, &labels, weights).unwrap()
}

fn loss_and_gradients() -> Check {
    let uniform = weighted_ce_loss(&Array2::zeros((5, 3)), &[0, 1, 2, 1, 0], &[1.0; 3]).map_err(|e| e.to_string())?;
    ensure((uniform - 3f64.ln()).abs() <= 1e-6, format!("uniform loss {uniform}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut config = EncoderConfig::tiny(20, 3);
    config.initializer_range = 0.3;
    let mut model = SequenceClassifier::random(config, &mut rng).map_err(|e| e.to_string())?;
    let batch: Vec<(Vec<u32>, usize)> = (0..4)
        .map(|i| {
            let mut ids = vec![0u32];
            ids.extend((0..rng.gen_range(2..7)).map(|_| rng.gen_range(4..20)));
            ids.push(2);
            (ids, i % 3)
        })
        .collect();
    let weights = [1.18, 3.83, 0.53];

    let caches: Vec<_> = batch
        .iter()
        .map(|(ids, _)| model.forward(ids, Mode::Eval).unwrap())
        .collect();
    let mut logits = Array2::zeros((batch.len(), 3));
    for (r, c) in caches.iter().enumerate() {
        logits.row_mut(r).assign(c.logits());
    }
    let labels: Vec<usize> = batch.iter().map(|b| b.1).collect();
    let (_, dlogits) = weighted_ce_with_grad(&logits, &labels, &weights).map_err(|e| e.to_string())?;
    let mut grads = model.params.zeros_like();
    for (r, c) in caches.iter().enumerate() {
        model.backward(c, &dlogits.row(r).to_owned(), &mut grads);
    }
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 60 {
        let ti = rng.gen_range(0..analytic.len());
        let ci = rng.gen_range(0..analytic[ti].1.len());
        let g = analytic[ti].1[ci];
        if g.abs() < 1e-8 {
            continue;
        }
        model.params.tensors_mut()[ti].1[ci] += eps;
        let plus = batch_loss(&model, &batch, &weights);
        model.params.tensors_mut()[ti].1[ci] -= 2.0 * eps;
        let minus = batch_loss(&model, &batch, &weights);
        model.params.tensors_mut()[ti].1[ci] += eps;
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (numeric - g).abs() / g.abs().max(numeric.abs());
        worst = worst.max(rel);
        ensure(
            rel < 1e-4,
            format!("{}[{ci}]: analytic {g} vs numeric {numeric}", analytic[ti].0),
        )?;
        checked += 1;
    }
    Ok(format!(
        "ln 3 loss {uniform:.9}; 60 coordinates, worst relative error {worst:.2e}"
    ))
}

fn training_smoke() -> Check {
    let bundle = split_toy(SMALL, 3);
    let data = TrainingData::from_bundle(&bundle, InputOptions::default(), None).map_err(|e| e.to_string())?;
    let model = train(
        &data,
        &TrainConfig {
            max_epochs: 4,
            patience: 3,
            ..fast_config(3)
        },
    )
    .map_err(|e| e.to_string())?;
    let losses: Vec<f64> = model.history.epochs.iter().map(|e| e.train_loss).collect();
    ensure(
        losses.len() >= 3 && losses[0] > losses[1] && losses[1] > losses[2],
        format!("losses {losses:?}"),
    )?;

    let patience = 3;
    let config = TrainConfig {
        max_epochs: 10,
        patience,
        ..fast_config(3)
    };
    let mut flat = |_: usize, _: &TrainedModel| Ok(0.5);
    let forced = train_with_scorer(&data, &config, &mut flat).map_err(|e| e.to_string())?;
    let h = &forced.history;
    ensure(
        h.epochs.len() == 1 + patience,
        format!("stopped after {} epochs", h.epochs.len()),
    )?;
    ensure(h.best_epoch == 1, format!("best epoch {}", h.best_epoch))?;
    let restored = forced.classifier.params.content_hash();
    ensure(
        restored == h.epochs[0].param_hash,
        "restored parameters differ from epoch 1",
    )?;
    ensure(restored != h.epochs[patience].param_hash, "parameters never moved")?;
    Ok(format!(
        "losses {:.3} > {:.3} > {:.3}; stopped at epoch {}, restored epoch 1 by hash",
        losses[0],
        losses[1],
        losses[2],
        h.epochs.len()
    ))
}

fn grid_completeness() -> Check {
    let bundles = SchemeBundles::split(&toy_corpus(SMALL, 8), SplitRatios::default(), 8).map_err(|e| e.to_string())?;
    let pool = toy_pool(&bundles.three_class);
    let config = AblationConfig {
        train: TrainConfig {
            max_epochs: 3,
            patience: 1,
            ..fast_config(3)
        },
        jobs: 4,
        ..Default::default()
    };
    let result = run_ablation(&bundles, &pool, &config).map_err(|e| e.to_string())?;
    ensure(
        result.cells.len() == 12 && result.is_complete(),
        format!("{} cells", result.cells.len()),
    )?;
    let mut expected = HashSet::new();
    for scheme in ["2class", "3class"] {
        for ctx in ["ctx", "noctx"] {
            for dose in ["000", "050", "100"] {
                expected.insert(format!("{scheme}_{ctx}_dose{dose}_seed42"));
            }
        }
    }
    let got: HashSet<String> = result.cells.iter().map(|c| c.cell.tag()).collect();
    ensure(got == expected, format!("coordinates {got:?}"))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_ablation_reports(&result, dir.path()).map_err(|e| e.to_string())?;
    let mut reader = csv::Reader::from_path(dir.path().join("dose_response.csv")).map_err(|e| e.to_string())?;
    let rows = reader.records().count();
    ensure(rows == 12, format!("dose-response rows {rows}"))?;
    for c in result.cells.iter().filter(|c| c.cell.dose == 0.0) {
        let options = InputOptions {
            with_context: c.cell.with_context,
            ..Default::default()
        };
        let data = TrainingData::from_bundle(bundles.get(c.cell.scheme), options, None).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            num_classes: c.cell.scheme.num_classes(),
            seed: c.cell.seed,
            ..config.train.clone()
        };
        let baseline = train(&data, &cfg).map_err(|e| e.to_string())?;
        ensure(
            baseline.classifier.params.content_hash() == c.param_hash,
            format!("{} differs from baseline", c.cell),
        )?;
    }
    Ok("12 cells, 12 dose-response rows, 4 dose-0 cells bit-identical to baselines".into())
}

fn attention_normalization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bundle = toy_corpus(SMALL, 8);
    let texts: Vec<&str> = bundle.examples.iter().map(|e| e.comment.text.as_str()).collect();
    let tokenizer = marketstance_nn::WordTokenizer::fit(texts.iter().copied(), Default::default());
    let mut config = EncoderConfig::tiny(marketstance_nn::TextTokenizer::vocab_size(&tokenizer), 3);
    config.num_heads = 4;
    config.initializer_range = 0.5;
    let mut model = hand_model(1.0);
    model.classifier = SequenceClassifier::random(config, &mut rng).map_err(|e| e.to_string())?;
    model.tokenizer = marketstance_core::trainer::Tokenizer::Word(tokenizer);
    model.config.max_token_length = 64;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let ex = bundle.examples.choose(&mut rng).unwrap();
        let options = InputOptions {
            with_context: i % 2 == 0,
            ..Default::default()
        };
        let input =
            build_model_input(ex, bundle.market(ex.market_id()).unwrap(), options, None).map_err(|e| e.to_string())?;
        let rec = extract_cls_attention(&model, &input, "random").map_err(|e| e.to_string())?;
        ensure(rec.per_head.len() == 4, "head count")?;
        for row in rec.per_head.iter().chain(std::iter::once(&rec.averaged)) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure(worst <= 1e-5, format!("row sum deviation {worst}"))?;

    for scale in [0.5, 1.0, 3.0] {
        let hand = hand_model(scale);
        for n in 1..6 {
            let words: Vec<&str> = (0..n).map(|_| *HAND_WORDS.choose(&mut rng).unwrap()).collect();
            let text = words.join(" ");
            let input = build_model_input(
                &marketstance_core::corpus::LabeledExample::real(
                    marketstance_core::corpus::Comment::new("c", "m", text),
                    StanceLabel::Pro,
                ),
                &marketstance_core::corpus::Market::new("m", "market", marketstance_core::corpus::Domain::Sports)
                    .unwrap(),
                InputOptions {
                    with_context: false,
                    ..Default::default()
                },
                None,
            )
            .map_err(|e| e.to_string())?;
            let rec = extract_cls_attention(&hand, &input, "hand").map_err(|e| e.to_string())?;
            let ids = hand.encode(&input.text).map_err(|e| e.to_string())?.ids;
            let want = hand_cls_average(&ids, scale);
            let diff = rec
                .averaged
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ensure(diff < 1e-9, format!("closed form mismatch {diff}"))?;
        }
    }
    Ok(format!(
        "100 inputs, worst row-sum deviation {worst:.1e}; head average matches closed form"
    ))
}

fn leakage_guard() -> Check {
    let bundle = split_toy(SMALL, 2);
    let pool: Vec<_> = toy_pool(&bundle).into_iter().filter(|s| s.is_accepted()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let dose = if rng.gen_bool(0.3) {
            *[0.0, 0.5, 1.0].choose(&mut rng).unwrap()
        } else {
            rng.gen_range(0.0..=1.0)
        };
        let seed: u64 = rng.gen();
        let mixed = mix_dose(&bundle, &pool, dose, seed).map_err(|e| e.to_string())?;
        let leaked = mixed
            .examples
            .iter()
            .filter(|e| e.provenance == Provenance::Synthetic && e.split != Split::Train)
            .count();
        ensure(
            leaked == 0,
            format!("{leaked} synthetic examples outside train at dose {dose}"),
        )?;
        check_no_leakage(&mixed).map_err(|e| e.to_string())?;
        ensure(mixed.len() - bundle.len() == dose_count(dose, pool.len()), "dose count")?;
    }
    Ok(format!(
        "100 draws over a pool of {}, no synthetic example in val/test",
        pool.len()
    ))
}

/// Full-scale reproduction needs the released dataset and a pretrained
/// encoder; it reports directions but never fails the suite.
fn full_scale_reproduction() -> Option<Check> {
    let dataset = std::env::var_os("MARKETSTANCE_DATASET")?;
    let encoder = std::env::var_os("MARKETSTANCE_ENCODER")?;
    let pool_path = std::env::var_os("MARKETSTANCE_SYNTHETIC_POOL")?;
    Some((|| {
        let data = DatasetBundle::load(&dataset).map_err(|e| e.to_string())?;
        let pool: Vec<marketstance_core::augment::SyntheticSample> =
            marketstance_core::corpus::read_jsonl(&pool_path).map_err(|e| e.to_string())?;
        let bundles = SchemeBundles::split(&data, SplitRatios::default(), 42).map_err(|e| e.to_string())?;
        let config = AblationConfig {
            train: TrainConfig {
                encoder: marketstance_core::trainer::EncoderSpec::Pretrained { path: encoder.into() },
                ..Default::default()
            },
            ..Default::default()
        };
        let result = run_ablation(&bundles, &pool, &config).map_err(|e| e.to_string())?;
        let f1 = |scheme, ctx, dose: f64| {
            result
                .cells
                .iter()
                .find(|c| c.cell.scheme == scheme && c.cell.with_context == ctx && c.cell.dose == dose)
                .and_then(|c| c.report.as_ref())
                .map_or(f64::NAN, |r| r.macro_f1)
        };
        let (three, three_ctx) = (
            f1(ClassScheme::ThreeClass, false, 0.0),
            f1(ClassScheme::ThreeClass, true, 0.0),
        );
        let (two_ctx, two_ctx_full) = (
            f1(ClassScheme::TwoClass, true, 0.0),
            f1(ClassScheme::TwoClass, true, 1.0),
        );
        let summary = format!(
            "3-class {three:.3} -> +ctx {three_ctx:.3}; 2-class+ctx {two_ctx:.3}; at 100% dose {two_ctx_full:.3}"
        );
        let ok = three_ctx - three >= 0.05 && (two_ctx - 0.68).abs() <= 0.05 && two_ctx_full < two_ctx;
        if ok {
            Ok(summary)
        } else {
            Err(summary)
        }
    })())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("class-weight exactness", class_weights),
        ("split exactness", split_exactness),
        ("filter suite", filter_suite),
        ("metric oracle equivalence", metric_oracle),
        ("loss and gradient checks", loss_and_gradients),
        ("training smoke test", training_smoke),
        ("grid completeness", grid_completeness),
        ("attention normalization", attention_normalization),
        ("leakage guard", leakage_guard),
    ];
    let mut failures = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match &outcome {
            Ok(detail) => println!("[PASS] {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                println!("[FAIL] {}. {name} ({secs:.1}s): {detail}", i + 1);
                failures.push(name);
            }
        }
    }
    match full_scale_reproduction() {
        None => println!(
            "[SKIP] 10. full-scale reproduction (non-gating): set MARKETSTANCE_DATASET, MARKETSTANCE_ENCODER and MARKETSTANCE_SYNTHETIC_POOL to run"
        ),
        Some(Ok(detail)) => println!("[PASS] 10. full-scale reproduction (non-gating): {detail}"),
        Some(Err(detail)) => println!("[FAIL] 10. full-scale reproduction (non-gating): {detail}"),
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
