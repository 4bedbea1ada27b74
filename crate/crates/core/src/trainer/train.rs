use std::path::PathBuf;

use marketstance_nn::{
    clip_grad_norm, load_pretrained, AdamW, AdamWConfig, EncoderConfig, Mode, ModelParams, SequenceClassifier,
    TextTokenizer, WordTokenizer, WordTokenizerConfig,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    compute_class_weights, weighted_ce_with_grad, ClassWeights, EpochRecord, Tokenizer, TrainError, TrainedModel,
    TrainingHistory,
};
use crate::corpus::{ClassScheme, DatasetBundle, Provenance, Split, StanceLabel};
use crate::evaluate::macro_f1;
use crate::preprocess::{build_model_input, InputOptions, ModelInput, NerProvider};

/// Which encoder to fine-tune.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Randomly initialised encoder with a word-level tokenizer fitted on the
    /// training texts.
    StandIn {
        hidden_size: usize,
        num_layers: usize,
        num_heads: usize,
        intermediate_size: usize,
        dropout: f64,
        init_std: f64,
    },
    /// A HuggingFace-format checkpoint directory (`config.json`,
    /// `model.safetensors`, `tokenizer.json`).
    Pretrained { path: PathBuf },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        let tiny = EncoderConfig::tiny(1, 2);
        EncoderSpec::StandIn {
            hidden_size: tiny.hidden_size,
            num_layers: tiny.num_layers,
            num_heads: tiny.num_heads,
            intermediate_size: tiny.intermediate_size,
            dropout: tiny.hidden_dropout,
            init_std: tiny.initializer_range,
        }
    }
}

impl EncoderSpec {
    pub fn id(&self) -> String {
        match self {
            EncoderSpec::StandIn {
                hidden_size,
                num_layers,
                ..
            } => format!("stand-in-h{hidden_size}-l{num_layers}"),
            EncoderSpec::Pretrained { path } => path.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_token_length: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub encoder: EncoderSpec,
    pub num_classes: usize,
    /// Share of total steps spent in linear warm-up; 0 keeps the rate constant.
    pub warmup_fraction: f64,
    /// Compute class weights from real training examples only.
    pub weights_from_real: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 16,
            max_token_length: 128,
            max_epochs: 10,
            patience: 3,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
            seed: 42,
            encoder: EncoderSpec::default(),
            num_classes: 3,
            warmup_fraction: 0.0,
            weights_from_real: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return fail("batch_size and max_epochs must be positive".into());
        }
        if self.patience >= self.max_epochs {
            return fail(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if self.max_token_length < 2 {
            return fail("max_token_length must leave room for special tokens".into());
        }
        if ClassScheme::from_num_classes(self.num_classes).is_none() {
            return fail(format!("num_classes {} must be 2 or 3", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if self.weight_decay < 0.0 || self.grad_clip_norm <= 0.0 {
            return fail("weight_decay must be >= 0 and grad_clip_norm > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: ModelInput,
    pub label: StanceLabel,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub scheme: ClassScheme,
    pub options: InputOptions,
    pub train: Vec<TrainingExample>,
    pub val: Vec<TrainingExample>,
}

/// Model inputs for every example of `split`, in bundle order.
pub fn split_examples(
    bundle: &DatasetBundle,
    split: Split,
    options: InputOptions,
    recognizer: Option<&dyn NerProvider>,
) -> Result<Vec<TrainingExample>, TrainError> {
    bundle
        .split(split)
        .map(|ex| {
            let market = bundle
                .market(ex.market_id())
                .ok_or_else(|| TrainError::Config(format!("unknown market {}", ex.market_id())))?;
            Ok(TrainingExample {
                input: build_model_input(ex, market, options, recognizer)?,
                label: ex.label,
                provenance: ex.provenance,
            })
        })
        .collect()
}

impl TrainingData {
    pub fn from_bundle(
        bundle: &DatasetBundle,
        options: InputOptions,
        recognizer: Option<&dyn NerProvider>,
    ) -> Result<Self, TrainError> {
        Ok(Self {
            scheme: bundle.scheme,
            options,
            train: split_examples(bundle, Split::Train, options, recognizer)?,
            val: split_examples(bundle, Split::Val, options, recognizer)?,
        })
    }

    pub fn class_counts(&self, real_only: bool) -> Vec<(StanceLabel, usize)> {
        self.scheme
            .labels()
            .iter()
            .map(|&l| {
                let n = self
                    .train
                    .iter()
                    .filter(|e| e.label == l && (!real_only || e.provenance == Provenance::Real))
                    .count();
                (l, n)
            })
            .collect()
    }
}

fn init_model(
    config: &TrainConfig,
    train_texts: &[&str],
    num_labels: usize,
) -> Result<(SequenceClassifier, Tokenizer), TrainError> {
    match &config.encoder {
        EncoderSpec::StandIn {
            hidden_size,
            num_layers,
            num_heads,
            intermediate_size,
            dropout,
            init_std,
        } => {
            let tokenizer = WordTokenizer::fit(train_texts.iter().copied(), WordTokenizerConfig::default());
            let encoder = EncoderConfig {
                vocab_size: tokenizer.vocab_size(),
                hidden_size: *hidden_size,
                num_layers: *num_layers,
                num_heads: *num_heads,
                intermediate_size: *intermediate_size,
                max_positions: config.max_token_length,
                position_offset: 0,
                layer_norm_eps: 1e-12,
                hidden_dropout: *dropout,
                attention_dropout: *dropout,
                initializer_range: *init_std,
                num_labels,
            };
            encoder.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let params = ModelParams::init(&encoder, &mut rng);
            Ok((SequenceClassifier::new(encoder, params)?, Tokenizer::Word(tokenizer)))
        }
        EncoderSpec::Pretrained { path } => {
            let bundle = load_pretrained(path, num_labels, config.seed)?;
            Ok((
                SequenceClassifier::new(bundle.config, bundle.params)?,
                Tokenizer::Hf(bundle.tokenizer),
            ))
        }
    }
}

/// Fine-tunes with validation macro F1 as the early-stopping score.
pub fn train(data: &TrainingData, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    let val_ids_cache = std::cell::RefCell::new(None::<Vec<Vec<u32>>>);
    let golds: Vec<usize> = data
        .val
        .iter()
        .map(|e| data.scheme.index_of(e.label).expect("validated label"))
        .collect();
    train_with_scorer(data, config, &mut |_, model| {
        let mut cache = val_ids_cache.borrow_mut();
        let ids = match cache.as_ref() {
            Some(ids) => ids,
            None => {
                let ids = data
                    .val
                    .iter()
                    .map(|e| Ok(model.encode(&e.input.text)?.ids))
                    .collect::<Result<Vec<_>, TrainError>>()?;
                cache.insert(ids)
            }
        };
        let preds = ids
            .iter()
            .map(|ids| {
                let p = model.classifier.predict_proba(ids)?;
                Ok(super::argmax(p.as_slice().expect("contiguous")))
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(macro_f1(&preds, &golds, data.scheme.num_classes())?)
    })
}

/// Scorer receives the 1-based epoch and the model after that epoch.
pub type EpochScorer<'a> = dyn FnMut(usize, &TrainedModel) -> Result<f64, TrainError> + 'a;

/// Fine-tunes with an arbitrary per-epoch validation score.
///
/// Stops after `patience` epochs without strict improvement, or at
/// `max_epochs`, and returns the parameters of the best epoch (earliest on ties).
pub fn train_with_scorer(
    data: &TrainingData,
    config: &TrainConfig,
    scorer: &mut EpochScorer<'_>,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if config.num_classes != data.scheme.num_classes() {
        return Err(TrainError::Config(format!(
            "num_classes {} does not match the {} dataset",
            config.num_classes, data.scheme
        )));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(TrainError::EmptySplit {
            train: data.train.len(),
            val: data.val.len(),
        });
    }
    let class_weights: ClassWeights = compute_class_weights(&data.class_counts(config.weights_from_real))?;
    log::info!("class weights: {class_weights}");

    let texts: Vec<&str> = data.train.iter().map(|e| e.input.text.as_str()).collect();
    let (classifier, tokenizer) = init_model(config, &texts, config.num_classes)?;
    let mut model = TrainedModel {
        classifier,
        tokenizer,
        config: config.clone(),
        scheme: data.scheme,
        input_options: data.options,
        history: TrainingHistory {
            epochs: Vec::new(),
            best_epoch: 0,
            class_weights: class_weights.clone(),
            truncated_inputs: 0,
        },
    };

    let mut truncated = 0;
    let mut encoded = Vec::with_capacity(data.train.len());
    for ex in &data.train {
        let enc = model.encode(&ex.input.text)?;
        truncated += usize::from(enc.truncated);
        let y = data
            .scheme
            .index_of(ex.label)
            .ok_or_else(|| TrainError::Config(format!("label {} outside the {} scheme", ex.label, data.scheme)))?;
        encoded.push((enc.ids, y));
    }
    if truncated > 0 {
        log::warn!("{truncated} training inputs truncated to {} tokens", model.max_len());
    }
    model.history.truncated_inputs = truncated;

    let mut optimizer = AdamW::new(
        AdamWConfig {
            weight_decay: config.weight_decay,
            ..Default::default()
        },
        &model.classifier.params,
    );
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let batches_per_epoch = encoded.len().div_ceil(config.batch_size);
    let warmup_steps = (config.warmup_fraction * (batches_per_epoch * config.max_epochs) as f64).round() as u64;
    let mut grads = model.classifier.params.zeros_like();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let caches = batch
                .iter()
                .map(|&i| model.classifier.forward(&encoded[i].0, Mode::Train(&mut dropout_rng)))
                .collect::<Result<Vec<_>, _>>()?;
            let c = config.num_classes;
            let mut logits = Array2::zeros((batch.len(), c));
            for (r, cache) in caches.iter().enumerate() {
                logits.row_mut(r).assign(cache.logits());
            }
            let labels: Vec<usize> = batch.iter().map(|&i| encoded[i].1).collect();
            let (loss, dlogits) = weighted_ce_with_grad(&logits, &labels, &class_weights.weights).map_err(|e| {
                TrainError::NonFinite(format!(
                    "epoch {epoch} batch {b}: {e}; parameter norm {:.4e}",
                    model.classifier.params.l2_norm()
                ))
            })?;
            for (r, cache) in caches.iter().enumerate() {
                model.classifier.backward(cache, &dlogits.row(r).to_owned(), &mut grads);
            }
            let grad_norm = clip_grad_norm(&mut grads, config.grad_clip_norm);
            let step = optimizer.steps() + 1;
            let lr = if step <= warmup_steps {
                config.learning_rate * step as f64 / warmup_steps as f64
            } else {
                config.learning_rate
            };
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(TrainError::NonFinite(format!(
                    "epoch {epoch} batch {b}: loss {loss}, gradient norm {grad_norm}, lr {lr:.3e}, parameter norm {:.4e}",
                    model.classifier.params.l2_norm()
                )));
            }
            optimizer.step(&mut model.classifier.params, &grads, lr);
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / encoded.len() as f64;
        let score = scorer(epoch, &model)?;
        log::info!("epoch {epoch}: train loss {train_loss:.4}, val macro F1 {score:.4}");
        model.history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_macro_f1: score,
            param_hash: model.classifier.params.content_hash(),
        });
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, model.classifier.params.clone()));
            model.history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        model.classifier.params = params;
    }
    Ok(model)
}
