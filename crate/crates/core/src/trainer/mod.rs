//! Class-weighted fine-tuning of an encoder with a linear classification head.

mod loss;
mod model;
mod train;
mod weights;

pub use loss::{weighted_ce_loss, weighted_ce_with_grad};
pub use model::{argmax, predict, EpochRecord, Prediction, Tokenizer, TrainedModel, TrainingHistory};
pub use train::{
    split_examples, train, train_with_scorer, EncoderSpec, EpochScorer, TrainConfig, TrainingData, TrainingExample,
};
pub use weights::{compute_class_weights, ClassWeights};

use thiserror::Error;

use crate::evaluate::EvalError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate class distribution: {0}")]
    DegenerateClass(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training needs non-empty train and val splits (got {train} and {val})")]
    EmptySplit { train: usize, val: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] marketstance_nn::NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
