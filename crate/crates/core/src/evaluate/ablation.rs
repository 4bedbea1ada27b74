use std::fmt;

use serde::{Deserialize, Serialize};

use super::{evaluate_labels, per_market_report, EvalError, MarketRow, MetricsReport};
use crate::augment::{mix_dose, SyntheticSample};
use crate::corpus::{project_two_class, stratified_split, ClassScheme, DatasetBundle, Split, SplitRatios};
use crate::preprocess::InputOptions;
use crate::trainer::{predict, split_examples, train, TrainConfig, TrainedModel, TrainingData};
use crate::util::parallel_map;

/// One grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub scheme: ClassScheme,
    pub with_context: bool,
    pub dose: f64,
    pub seed: u64,
}

impl AblationCell {
    /// Model configuration label such as `3-class + ctx`.
    pub fn configuration(&self) -> String {
        let classes = match self.scheme {
            ClassScheme::TwoClass => "2-class",
            ClassScheme::ThreeClass => "3-class",
        };
        if self.with_context {
            format!("{classes} + ctx")
        } else {
            classes.to_string()
        }
    }

    /// File-name tag, e.g. `3class_ctx_dose050_seed42`.
    pub fn tag(&self) -> String {
        format!(
            "{}_{}_dose{:03}_seed{}",
            self.scheme.as_str(),
            if self.with_context { "ctx" } else { "noctx" },
            (self.dose * 100.0).round() as u32,
            self.seed
        )
    }
}

impl fmt::Display for AblationCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} @ {:.0}% (seed {})",
            self.configuration(),
            self.dose * 100.0,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub schemes: Vec<ClassScheme>,
    pub contexts: Vec<bool>,
    pub doses: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Cells trained concurrently.
    pub jobs: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            schemes: vec![ClassScheme::TwoClass, ClassScheme::ThreeClass],
            contexts: vec![false, true],
            doses: vec![0.0, 0.5, 1.0],
            seeds: vec![42],
            train: TrainConfig::default(),
            jobs: 1,
        }
    }
}

impl AblationConfig {
    pub fn cells(&self) -> Vec<AblationCell> {
        let mut cells = Vec::new();
        for &seed in &self.seeds {
            for &scheme in &self.schemes {
                for &with_context in &self.contexts {
                    for &dose in &self.doses {
                        cells.push(AblationCell {
                            scheme,
                            with_context,
                            dose,
                            seed,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.seeds.is_empty() || self.schemes.is_empty() || self.contexts.is_empty() || self.doses.is_empty() {
            return Err(EvalError::Config("every grid axis needs at least one value".into()));
        }
        if let Some(d) = self.doses.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(EvalError::Config(format!("dose {d} outside [0, 1]")));
        }
        Ok(())
    }
}

/// The two scheme-specific datasets with splits fixed before any training.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeBundles {
    pub three_class: DatasetBundle,
    pub two_class: DatasetBundle,
}

impl SchemeBundles {
    /// Splits the three-class dataset and, separately, its two-class projection.
    /// A three-class dataset whose examples all carry a split keeps it.
    pub fn split(dataset: &DatasetBundle, ratios: SplitRatios, seed: u64) -> Result<Self, EvalError> {
        if dataset.scheme != ClassScheme::ThreeClass {
            return Err(EvalError::Config("ablation expects the three-class dataset".into()));
        }
        let assigned = !dataset.is_empty() && dataset.examples.iter().all(|e| e.split != Split::Unassigned);
        let three_class = if assigned {
            dataset.clone()
        } else {
            stratified_split(dataset, ratios, seed)?
        };
        Ok(Self {
            three_class,
            two_class: stratified_split(&project_two_class(dataset)?, ratios, seed)?,
        })
    }

    pub fn get(&self, scheme: ClassScheme) -> &DatasetBundle {
        match scheme {
            ClassScheme::TwoClass => &self.two_class,
            ClassScheme::ThreeClass => &self.three_class,
        }
    }
}

/// Accepted samples whose source is a training example of `bundle`.
pub fn usable_pool(bundle: &DatasetBundle, pool: &[SyntheticSample]) -> Vec<SyntheticSample> {
    let train_ids: std::collections::HashSet<&str> = bundle.split(Split::Train).map(|e| e.id()).collect();
    let usable: Vec<SyntheticSample> = pool
        .iter()
        .filter(|s| s.is_accepted() && train_ids.contains(s.source_id.as_str()))
        .cloned()
        .collect();
    let accepted = pool.iter().filter(|s| s.is_accepted()).count();
    if usable.len() < accepted {
        log::warn!(
            "{} of {accepted} accepted synthetic samples come from outside the {} training split and are skipped",
            accepted - usable.len(),
            bundle.scheme
        );
    }
    usable
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: AblationCell,
    pub report: Option<MetricsReport>,
    pub per_market: Vec<MarketRow>,
    pub synthetic_added: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub param_hash: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub cells: Vec<CellResult>,
}

impl AblationResult {
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.report.is_some())
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.report.is_none())
    }
}

/// Trains and scores one cell on the scheme's fixed splits.
pub fn run_cell(
    bundle: &DatasetBundle,
    pool: &[SyntheticSample],
    cell: AblationCell,
    train_config: &TrainConfig,
) -> Result<(CellResult, TrainedModel), EvalError> {
    let mixed = mix_dose(bundle, pool, cell.dose, cell.seed)?;
    let options = InputOptions {
        with_context: cell.with_context,
        ..Default::default()
    };
    let data = TrainingData::from_bundle(&mixed, options, None)?;
    let config = TrainConfig {
        seed: cell.seed,
        num_classes: cell.scheme.num_classes(),
        ..train_config.clone()
    };
    let model = train(&data, &config)?;
    let test = split_examples(bundle, Split::Test, options, None)?;
    let inputs: Vec<_> = test.iter().map(|e| e.input.clone()).collect();
    let preds: Vec<_> = predict(&model, cell.scheme, &inputs)?
        .into_iter()
        .map(|p| p.label)
        .collect();
    let golds: Vec<_> = test.iter().map(|e| e.label).collect();
    let market_ids: Vec<_> = test.iter().map(|e| e.input.market_id.clone()).collect();
    let result = CellResult {
        cell,
        report: Some(evaluate_labels(cell.scheme, &preds, &golds)?),
        per_market: per_market_report(cell.scheme, &preds, &golds, &market_ids, &bundle.markets)?,
        synthetic_added: mixed.len() - bundle.len(),
        best_epoch: model.history.best_epoch,
        epochs_run: model.history.epochs.len(),
        param_hash: model.classifier.params.content_hash(),
        error: None,
    };
    Ok((result, model))
}

/// Runs every grid cell. A failing cell is recorded and the rest proceed.
pub fn run_ablation(
    bundles: &SchemeBundles,
    pool: &[SyntheticSample],
    config: &AblationConfig,
) -> Result<AblationResult, EvalError> {
    config.validate()?;
    let pools: Vec<(ClassScheme, Vec<SyntheticSample>)> = config
        .schemes
        .iter()
        .map(|&s| (s, usable_pool(bundles.get(s), pool)))
        .collect();
    let cells = config.cells();
    let results = parallel_map(&cells, config.jobs, |&cell| {
        let pool = &pools
            .iter()
            .find(|(s, _)| *s == cell.scheme)
            .expect("pool per scheme")
            .1;
        log::info!("training cell {cell}");
        match run_cell(bundles.get(cell.scheme), pool, cell, &config.train) {
            Ok((result, _)) => result,
            Err(e) => {
                log::error!("cell {cell} failed: {e}");
                CellResult {
                    cell,
                    report: None,
                    per_market: Vec::new(),
                    synthetic_added: 0,
                    best_epoch: 0,
                    epochs_run: 0,
                    param_hash: String::new(),
                    error: Some(e.to_string()),
                }
            }
        }
    });
    Ok(AblationResult { cells: results })
}
