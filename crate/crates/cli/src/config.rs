//! Pipeline configuration: a TOML file with `${VAR}` / `${VAR:-default}`
//! interpolation in string values.
//!
//! Input paths resolve relative to the directory holding the config file;
//! `output_root` resolves relative to the working directory.

use std::path::{Path, PathBuf};

use marketstance_core::augment::{AugmentConfig, FilterThresholds, GenerationConfig, API_KEY_ENV};
use marketstance_core::corpus::{ApiConfig, ClassScheme, SplitRatios};
use marketstance_core::evaluate::AblationConfig;
use marketstance_core::preprocess::{DictionaryRecognizer, NerProvider, SpacyRecognizer};
use marketstance_core::trainer::{EncoderSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Upper bound on concurrently trained grid cells.
    pub jobs: usize,
    pub output_root: PathBuf,
    pub corpus: CorpusSettings,
    pub preprocess: PreprocessSettings,
    pub augment: AugmentSettings,
    /// `seed` here is always replaced by the global seed.
    pub train: TrainConfig,
    pub ablation: AblationSettings,
    pub interpret: InterpretSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            jobs: 1,
            output_root: PathBuf::from("runs"),
            corpus: CorpusSettings::default(),
            preprocess: PreprocessSettings::default(),
            augment: AugmentSettings::default(),
            train: TrainConfig::default(),
            ablation: AblationSettings::default(),
            interpret: InterpretSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    /// CSV with `market_id,domain[,comment_parent_id]`.
    pub markets_file: Option<PathBuf>,
    /// CSV with `comment_id,label`.
    pub labels_file: Option<PathBuf>,
    /// A ready dataset (JSONL) used instead of ingesting.
    pub dataset: Option<PathBuf>,
    pub api: ApiConfig,
    pub split: SplitRatios,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognizerKind {
    Dictionary,
    Spacy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSettings {
    /// Prepend the market question to each comment.
    pub context: bool,
    /// Replace named entities in comments with `ENTITY`.
    pub mask: bool,
    /// Also mask entities in market questions.
    pub mask_question: bool,
    pub recognizer: RecognizerKind,
    /// `phrase<TAB>KIND` file for the dictionary recognizer; the bundled list otherwise.
    pub gazetteer: Option<PathBuf>,
    pub spacy_python: PathBuf,
    pub spacy_model: String,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            context: true,
            mask: true,
            mask_question: false,
            recognizer: RecognizerKind::Dictionary,
            gazetteer: None,
            spacy_python: PathBuf::from("python3"),
            spacy_model: SpacyRecognizer::DEFAULT_MODEL.to_string(),
        }
    }
}

impl PreprocessSettings {
    pub fn build_recognizer(&self) -> Result<Box<dyn NerProvider>, CliError> {
        let invalid = |e: marketstance_core::preprocess::PreprocessError| CliError::Validation(e.to_string());
        match self.recognizer {
            RecognizerKind::Dictionary => match &self.gazetteer {
                Some(path) => Ok(Box::new(DictionaryRecognizer::from_file(path).map_err(invalid)?)),
                None => Ok(Box::new(DictionaryRecognizer::with_default_gazetteer())),
            },
            RecognizerKind::Spacy => Ok(Box::new(
                SpacyRecognizer::new(&self.spacy_python, &self.spacy_model).map_err(invalid)?,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Stub,
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    pub client: ClientKind,
    /// JSON object of canned replies keyed by source comment id.
    pub stub_replies: Option<PathBuf>,
    /// Answer sources without a canned reply with a rule-based rewrite.
    pub rule_fallback: bool,
    /// Share of accepted samples mixed into the `augment` output dataset.
    pub dose: f64,
    pub generation: GenerationConfig,
    pub thresholds: FilterThresholds,
    pub parallelism: usize,
    pub min_request_interval_ms: u64,
    pub retry_backoff_ms: u64,
    pub max_transport_failure_rate: f64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        let base = AugmentConfig::default();
        Self {
            client: ClientKind::Stub,
            stub_replies: None,
            rule_fallback: false,
            dose: 1.0,
            generation: base.generation,
            thresholds: base.thresholds,
            parallelism: base.parallelism,
            min_request_interval_ms: base.min_request_interval_ms,
            retry_backoff_ms: base.retry_backoff_ms,
            max_transport_failure_rate: base.max_transport_failure_rate,
        }
    }
}

impl AugmentSettings {
    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            generation: self.generation.clone(),
            thresholds: self.thresholds.clone(),
            parallelism: self.parallelism,
            min_request_interval_ms: self.min_request_interval_ms,
            retry_backoff_ms: self.retry_backoff_ms,
            max_transport_failure_rate: self.max_transport_failure_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub schemes: Vec<ClassScheme>,
    pub contexts: Vec<bool>,
    pub doses: Vec<f64>,
    /// Explicit grid seeds; when empty, `num_seeds` consecutive seeds from the global seed.
    pub seeds: Vec<u64>,
    pub num_seeds: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        let base = AblationConfig::default();
        Self {
            schemes: base.schemes,
            contexts: base.contexts,
            doses: base.doses,
            seeds: Vec::new(),
            num_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretSettings {
    /// Scheme of the with/without-context model pair compared in `run-all`.
    pub scheme: ClassScheme,
    pub dose: f64,
    pub max_cases: usize,
    /// Test examples rendered side by side under both models.
    pub contrast_examples: usize,
    /// Encoder layer to read attention from; the final layer when unset.
    pub layer: Option<usize>,
}

impl Default for InterpretSettings {
    fn default() -> Self {
        Self {
            scheme: ClassScheme::ThreeClass,
            dose: 0.0,
            max_cases: 10,
            contrast_examples: 3,
            layer: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Corpus,
    Preprocess,
    Augment,
    Train,
    Ablation,
    Interpret,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::Corpus,
        Section::Preprocess,
        Section::Augment,
        Section::Train,
        Section::Ablation,
        Section::Interpret,
    ];
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output_root: Option<PathBuf>,
}

/// Replaces `${VAR}` and `${VAR:-default}` using `lookup`.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| format!("unterminated `${{` in `{text}`"))?;
        let expr = &after[..end];
        let (name, default) = match expr.split_once(":-") {
            Some((n, d)) => (n, Some(d)),
            None => (expr, None),
        };
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("invalid variable name `{name}` in `{text}`"));
        }
        match (lookup(name), default) {
            (Some(v), _) => out.push_str(&v),
            (None, Some(d)) => out.push_str(d),
            (None, None) => return Err(format!("environment variable {name} is not set")),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(value: &mut toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), String> {
    match value {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for v in items {
                interpolate_value(v, lookup)?;
            }
        }
        toml::Value::Table(t) => {
            for (_, v) in t.iter_mut() {
                interpolate_value(v, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text, interpolating environment variables via `lookup` and
    /// resolving input paths against `base`.
    pub fn from_toml(text: &str, base: &Path, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        interpolate_value(&mut value, lookup).map_err(CliError::Validation)?;
        let mut config: PipelineConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(e.to_string()))?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, &|name| std::env::var(name).ok())
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.markets_file);
        resolve(base, &mut self.corpus.labels_file);
        resolve(base, &mut self.corpus.dataset);
        resolve(base, &mut self.corpus.api.fixtures);
        resolve(base, &mut self.preprocess.gazetteer);
        resolve(base, &mut self.augment.stub_replies);
        if let EncoderSpec::Pretrained { path } = &mut self.train.encoder {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Applies command-line overrides and pins the training seed to the global one.
    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(jobs) = overrides.jobs {
            self.jobs = jobs;
        }
        if let Some(root) = &overrides.output_root {
            self.output_root = root.clone();
        }
        self.train.seed = self.seed;
    }

    pub fn grid_seeds(&self) -> Vec<u64> {
        if self.ablation.seeds.is_empty() {
            (0..self.ablation.num_seeds as u64).map(|i| self.seed + i).collect()
        } else {
            self.ablation.seeds.clone()
        }
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            schemes: self.ablation.schemes.clone(),
            contexts: self.ablation.contexts.clone(),
            doses: self.ablation.doses.clone(),
            seeds: self.grid_seeds(),
            train: self.train.clone(),
            jobs: self.jobs,
        }
    }

    /// Every problem found, reported together. Nothing is written.
    pub fn validate(&self) -> Result<(), CliError> {
        self.validate_sections(&Section::ALL)
    }

    /// Validates only the listed sections plus the global fields.
    pub fn validate_sections(&self, sections: &[Section]) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if self.jobs == 0 {
            problems.push("jobs must be at least 1".to_string());
        }
        for section in sections {
            match section {
                Section::Corpus => self.corpus_problems(&mut problems),
                Section::Preprocess => self.preprocess_problems(&mut problems),
                Section::Augment => self.augment_problems(&mut problems),
                Section::Train => {
                    if let Err(e) = self.train.validate() {
                        problems.push(format!("train: {e}"));
                    }
                    if let EncoderSpec::Pretrained { path } = &self.train.encoder {
                        check_file(&mut problems, "train.encoder.path", &path.join("config.json"));
                    }
                }
                Section::Ablation => self.ablation_problems(&mut problems),
                Section::Interpret => {
                    if !(0.0..=1.0).contains(&self.interpret.dose) {
                        problems.push(format!("interpret.dose {} outside [0, 1]", self.interpret.dose));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems.join("; ")))
        }
    }

    fn corpus_problems(&self, problems: &mut Vec<String>) {
        let c = &self.corpus;
        match (&c.dataset, &c.markets_file, &c.labels_file) {
            (Some(d), _, _) => check_file(problems, "corpus.dataset", d),
            (None, Some(m), Some(l)) => {
                check_file(problems, "corpus.markets_file", m);
                check_file(problems, "corpus.labels_file", l);
            }
            _ => problems.push("corpus needs either `dataset` or both `markets_file` and `labels_file`".into()),
        }
        if let Some(dir) = &c.api.fixtures {
            if !dir.join("markets.json").is_file() {
                problems.push(format!("corpus.api.fixtures: {} has no markets.json", dir.display()));
            }
        }
        if let Err(e) = c.split.validate() {
            problems.push(format!("corpus.split: {e}"));
        }
    }

    fn preprocess_problems(&self, problems: &mut Vec<String>) {
        if self.preprocess.mask || self.preprocess.mask_question {
            if let Err(e) = self.preprocess.build_recognizer() {
                problems.push(format!("preprocess: {e}"));
            }
        }
    }

    fn augment_problems(&self, problems: &mut Vec<String>) {
        let a = &self.augment;
        if !(0.0..=1.0).contains(&a.dose) {
            problems.push(format!("augment.dose {} outside [0, 1]", a.dose));
        }
        if let Err(e) = a.generation.validate() {
            problems.push(format!("augment.generation: {e}"));
        }
        if !(0.0..=1.0).contains(&a.max_transport_failure_rate) {
            problems.push("augment.max_transport_failure_rate must lie in [0, 1]".into());
        }
        match a.client {
            ClientKind::Stub => match &a.stub_replies {
                Some(p) => check_file(problems, "augment.stub_replies", p),
                None if !a.rule_fallback => {
                    problems.push("augment: the stub client needs `stub_replies` or `rule_fallback = true`".into())
                }
                None => {}
            },
            ClientKind::Anthropic => {
                if std::env::var(API_KEY_ENV).map_or(true, |k| k.trim().is_empty()) {
                    problems.push(format!("augment: client `anthropic` needs {API_KEY_ENV}"));
                }
            }
        }
    }

    fn ablation_problems(&self, problems: &mut Vec<String>) {
        if let Err(e) = self.ablation_config().validate() {
            problems.push(format!("ablation: {e}"));
        }
        if let Err(e) = self.train.validate() {
            problems.push(format!("train: {e}"));
        }
    }

    /// The config as written next to run outputs, with secrets removed.
    pub fn effective_toml(&self) -> Result<String, CliError> {
        let mut shown = self.clone();
        if shown.corpus.api.bearer_token.is_some() {
            shown.corpus.api.bearer_token = Some("<redacted>".into());
        }
        toml::to_string(&shown).map_err(|e| CliError::Validation(e.to_string()))
    }
}

fn check_file(problems: &mut Vec<String>, field: &str, path: &Path) {
    if !path.is_file() {
        problems.push(format!("{field}: {} does not exist", path.display()));
    }
}
