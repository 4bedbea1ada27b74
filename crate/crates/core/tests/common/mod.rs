#![allow(dead_code)]

use marketstance_core::augment::{run_augmentation, AuditLog, AugmentConfig, StubClient, SyntheticSample};
use marketstance_core::corpus::{stratified_split, DatasetBundle, Split, SplitRatios, StanceLabel};
use marketstance_core::toy::{toy_corpus, toy_flip_replies, ToyCorpusSpec};
use marketstance_core::trainer::{EncoderSpec, TrainConfig};

pub const SMALL: ToyCorpusSpec = ToyCorpusSpec {
    pro: 60,
    anti: 30,
    neutral: 90,
};

/// Toy corpus with splits assigned.
pub fn split_toy(spec: ToyCorpusSpec, seed: u64) -> DatasetBundle {
    stratified_split(&toy_corpus(spec, seed), SplitRatios::default(), seed).unwrap()
}

/// Stand-in encoder settings that learn the toy corpus in a few epochs.
pub fn fast_config(num_classes: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        max_token_length: 32,
        max_epochs: 8,
        patience: 3,
        num_classes,
        encoder: EncoderSpec::StandIn {
            hidden_size: 16,
            num_layers: 1,
            num_heads: 2,
            intermediate_size: 32,
            dropout: 0.0,
            init_std: 0.1,
        },
        ..Default::default()
    }
}

/// Canned flips for every Pro training example, run through the filters.
pub fn toy_pool(bundle: &DatasetBundle) -> Vec<SyntheticSample> {
    let pro: Vec<_> = bundle
        .split(Split::Train)
        .filter(|e| e.label == StanceLabel::Pro)
        .cloned()
        .collect();
    let client = StubClient::from_texts(toy_flip_replies(bundle));
    let config = AugmentConfig {
        retry_backoff_ms: 0,
        ..Default::default()
    };
    run_augmentation(&pro, &bundle.markets, &config, &client, &AuditLog::in_memory())
        .unwrap()
        .samples
}

use marketstance_core::augment::RejectionRule;

/// `(original, generated, expected rejection)`; `None` means accepted.
pub const FILTER_CASES: [(&str, &str, Option<RejectionRule>); 20] = [
    (
        "You lost get over it trump male everything better",
        "You won but trump didn't make everything better",
        None,
    ),
    ("trump wins", "nah", Some(RejectionRule::MinLength)),
    ("trump wins", "no way", Some(RejectionRule::MinLength)),
    ("trump wins", "", Some(RejectionRule::MinLength)),
    ("trump wins", "   nah   rip  ", Some(RejectionRule::MinLength)),
    ("trump wins big", "Sure thing", Some(RejectionRule::MinLength)),
    (
        "trump wins",
        "Here is the rewritten comment: trump loses",
        Some(RejectionRule::MetaCommentary),
    ),
    (
        "trump wins big",
        "Sure, trump is done",
        Some(RejectionRule::MetaCommentary),
    ),
    (
        "trump wins big",
        "I think trump loses badly",
        Some(RejectionRule::MetaCommentary),
    ),
    (
        "trump wins big",
        "\"Here: trump is cooked\"",
        Some(RejectionRule::MetaCommentary),
    ),
    (
        "trump wins big today",
        "**Sure** trump loses",
        Some(RejectionRule::MetaCommentary),
    ),
    (
        "trump wins",
        "no chance trump wins this one at all",
        Some(RejectionRule::LengthRatio),
    ),
    (
        "chiefs win easily",
        "no way the chiefs pull this off",
        Some(RejectionRule::LengthRatio),
    ),
    ("chiefs win easily", "no way the chiefs pull through", None),
    (
        "bitcoin to the moon soon",
        "bitcoin to the moon soon",
        Some(RejectionRule::EchoOverlap),
    ),
    (
        "bitcoin to the moon soon",
        "BITCOIN TO THE MOON SOON",
        Some(RejectionRule::EchoOverlap),
    ),
    ("fed cuts rates in december", "fed cuts rates in january", None),
    (
        "fed cuts rates in december for sure",
        "fed cuts rates in december never",
        Some(RejectionRule::EchoOverlap),
    ),
    ("trump wins big", "Imagine trump losing lol", None),
    ("trump wins for sure", "trump loses here for sure", None),
];

/// Confusion counts by direct enumeration of every (gold, pred) pair.
pub fn oracle_confusion(preds: &[usize], golds: &[usize], classes: usize) -> Vec<Vec<usize>> {
    (0..classes)
        .map(|g| {
            (0..classes)
                .map(|p| preds.iter().zip(golds).filter(|&(&pp, &gg)| pp == p && gg == g).count())
                .collect()
        })
        .collect()
}

/// Per-class (precision, recall, f1) and accuracy by counting, with 0 for
/// undefined ratios.
pub fn oracle_scores(preds: &[usize], golds: &[usize], classes: usize) -> (Vec<(f64, f64, f64)>, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per = (0..classes)
        .map(|c| {
            let tp = preds.iter().zip(golds).filter(|&(&p, &g)| p == c && g == c).count();
            let predicted = preds.iter().filter(|&&p| p == c).count();
            let actual = golds.iter().filter(|&&g| g == c).count();
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        })
        .collect();
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    (per, ratio(correct, golds.len()))
}

use marketstance_core::corpus::ClassScheme;
use marketstance_core::preprocess::InputOptions;
use marketstance_core::trainer::{ClassWeights, Tokenizer, TrainedModel, TrainingHistory};
use marketstance_nn::{EncoderConfig, ModelParams, SequenceClassifier, WordTokenizer, WordTokenizerConfig};
use ndarray::{arr1, Array2};

/// Unit-variance, zero-mean embedding rows, so the embedding layer norm is
/// the identity and attention logits are plain dot products.
pub fn hand_rows() -> Vec<[f64; 4]> {
    let r2 = std::f64::consts::SQRT_2;
    vec![
        [1.0, -1.0, 1.0, -1.0],
        [r2, -r2, 0.0, 0.0],
        [0.0, 0.0, -r2, r2],
        [-1.0, 1.0, 1.0, -1.0],
        [-r2, r2, 0.0, 0.0],
    ]
}

pub const HAND_WORDS: [&str; 5] = ["market", "yes", "no", "maybe", "comment"];

/// One-layer, two-head encoder with identity query/key maps scaled by
/// `query_scale`; vocabulary id `i` embeds as `hand_rows()[i % 5]`.
pub fn hand_model(query_scale: f64) -> TrainedModel {
    let mut vocab: Vec<String> = ["<s>", "<pad>", "</s>", "<unk>"].map(String::from).to_vec();
    vocab.extend(HAND_WORDS.iter().map(|w| w.to_string()));
    let tokenizer = WordTokenizer::from_vocab(WordTokenizerConfig::default(), vocab);
    let rows = hand_rows();
    let config = EncoderConfig {
        vocab_size: 9,
        hidden_size: 4,
        num_layers: 1,
        num_heads: 2,
        intermediate_size: 4,
        max_positions: 16,
        position_offset: 0,
        layer_norm_eps: 1e-12,
        hidden_dropout: 0.0,
        attention_dropout: 0.0,
        initializer_range: 0.02,
        num_labels: 3,
    };
    let mut params = ModelParams::zeros(&config);
    for i in 0..9 {
        params.word_embeddings.row_mut(i).assign(&arr1(&rows[i % 5]));
    }
    params.embed_norm.gamma.fill(1.0);
    params.layers[0].query.weight = Array2::eye(4) * query_scale;
    params.layers[0].key.weight = Array2::eye(4);
    params.layers[0].attn_norm.gamma.fill(1.0);
    params.layers[0].ffn_norm.gamma.fill(1.0);
    TrainedModel {
        classifier: SequenceClassifier::new(config, params).unwrap(),
        tokenizer: Tokenizer::Word(tokenizer),
        config: TrainConfig {
            max_token_length: 16,
            ..Default::default()
        },
        scheme: ClassScheme::ThreeClass,
        input_options: InputOptions::default(),
        history: TrainingHistory {
            epochs: Vec::new(),
            best_epoch: 0,
            class_weights: ClassWeights::uniform(ClassScheme::ThreeClass.labels()),
            truncated_inputs: 0,
        },
    }
}

/// Closed-form head-averaged CLS attention of [`hand_model`] for token ids `ids`.
pub fn hand_cls_average(ids: &[u32], query_scale: f64) -> Vec<f64> {
    let rows = hand_rows();
    let row = |id: u32| rows[id as usize % 5];
    let per_head: Vec<Vec<f64>> = (0..2)
        .map(|h| {
            let q = row(ids[0]);
            let logits: Vec<f64> = ids
                .iter()
                .map(|&j| {
                    let k = row(j);
                    (h * 2..h * 2 + 2).map(|d| q[d] * query_scale * k[d]).sum::<f64>() / 2f64.sqrt()
                })
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            logits.iter().map(|l| l.exp() / z).collect()
        })
        .collect();
    (0..ids.len())
        .map(|t| (per_head[0][t] + per_head[1][t]) / 2.0)
        .collect()
}
