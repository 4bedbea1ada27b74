use std::path::Path;

use marketstance_nn::{
    load_params, save_params, EncoderConfig, Encoding, HfTokenizer, SequenceClassifier, TextTokenizer, WordTokenizer,
};
use serde::{Deserialize, Serialize};

use super::{ClassWeights, TrainConfig, TrainError};
use crate::corpus::{ClassScheme, StanceLabel};
use crate::preprocess::{InputOptions, ModelInput};

/// Tokenizer owned by a trained model.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Word(WordTokenizer),
    Hf(HfTokenizer),
}

impl TextTokenizer for Tokenizer {
    fn encode(&self, text: &str, max_len: usize) -> marketstance_nn::Result<Encoding> {
        match self {
            Tokenizer::Word(t) => t.encode(text, max_len),
            Tokenizer::Hf(t) => t.encode(text, max_len),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Word(t) => t.vocab_size(),
            Tokenizer::Hf(t) => t.vocab_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    /// Content hash of the parameters at the end of this epoch.
    pub param_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters the model holds.
    pub best_epoch: usize,
    pub class_weights: ClassWeights,
    pub truncated_inputs: usize,
}

impl TrainingHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }
}

pub struct TrainedModel {
    pub classifier: SequenceClassifier,
    pub tokenizer: Tokenizer,
    pub config: TrainConfig,
    pub scheme: ClassScheme,
    /// How inputs were formatted during training.
    pub input_options: InputOptions,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: StanceLabel,
    pub probabilities: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    pub fn max_len(&self) -> usize {
        self.config
            .max_token_length
            .min(self.classifier.config.max_sequence_len())
    }

    pub fn encode(&self, text: &str) -> Result<Encoding, TrainError> {
        Ok(self.tokenizer.encode(text, self.max_len())?)
    }

    pub fn predict_one(&self, input: &ModelInput) -> Result<Prediction, TrainError> {
        let enc = self.encode(&input.text)?;
        let probs = self.classifier.predict_proba(&enc.ids)?.to_vec();
        let label = self
            .scheme
            .label_at(argmax(&probs))
            .expect("classifier width matches scheme");
        Ok(Prediction {
            label,
            probabilities: probs,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_params(&self.classifier.params, dir.join("params.safetensors"))?;
        write_json(dir.join("encoder_config.json"), &self.classifier.config)?;
        write_json(dir.join("train_config.json"), &self.config)?;
        write_json(dir.join("history.json"), &self.history)?;
        write_json(dir.join("scheme.json"), &self.scheme)?;
        write_json(dir.join("input_options.json"), &self.input_options)?;
        match &self.tokenizer {
            Tokenizer::Word(t) => write_json(dir.join("word_tokenizer.json"), t)?,
            Tokenizer::Hf(t) => t.save(dir.join("tokenizer.json"))?,
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TrainError> {
        let dir = dir.as_ref();
        let encoder: EncoderConfig = read_json(dir.join("encoder_config.json"))?;
        let params = load_params(dir.join("params.safetensors"), &encoder)?;
        let classifier = SequenceClassifier::new(encoder, params)?;
        let word = dir.join("word_tokenizer.json");
        let tokenizer = if word.exists() {
            Tokenizer::Word(read_json(word)?)
        } else {
            Tokenizer::Hf(HfTokenizer::from_file(dir.join("tokenizer.json"))?)
        };
        Ok(Self {
            classifier,
            tokenizer,
            config: read_json(dir.join("train_config.json"))?,
            scheme: read_json(dir.join("scheme.json"))?,
            input_options: read_json(dir.join("input_options.json"))?,
            history: read_json(dir.join("history.json"))?,
        })
    }
}

fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T, TrainError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Class predictions for `inputs`; `scheme` must be the model's.
pub fn predict(
    model: &TrainedModel,
    scheme: ClassScheme,
    inputs: &[ModelInput],
) -> Result<Vec<Prediction>, TrainError> {
    if scheme != model.scheme {
        return Err(TrainError::Config(format!(
            "inputs use the {scheme} scheme but the model was trained for {}",
            model.scheme
        )));
    }
    inputs.iter().map(|i| model.predict_one(i)).collect()
}
