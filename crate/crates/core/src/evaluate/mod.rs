//! Classification metrics, per-market breakdowns and the ablation grid.

mod ablation;
mod metrics;
mod per_market;
mod report;

pub use ablation::{
    run_ablation, run_cell, usable_pool, AblationCell, AblationConfig, AblationResult, CellResult, SchemeBundles,
};
pub use metrics::{
    accuracy, confusion_matrix, confusion_matrix_normalized, evaluate_labels, macro_f1, per_class_prf, row_normalize,
    ClassMetrics, MetricsReport, Prf,
};
pub use per_market::{per_market_report, MarketRow};
pub use report::{mean_sd, write_ablation_reports, write_confusion_csv, write_metrics_csv, write_per_market_csv};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::corpus::{ClassScheme, CorpusError, StanceLabel};
use crate::trainer::TrainError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("class index {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },
    #[error("label {label} is not part of the {scheme} scheme")]
    LabelOutsideScheme { label: StanceLabel, scheme: ClassScheme },
    #[error("unknown market `{0}`")]
    UnknownMarket(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Train(Box<TrainError>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(Box::new(e))
    }
}
