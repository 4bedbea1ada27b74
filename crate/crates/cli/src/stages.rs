//! One function per pipeline stage. Each reads its inputs, writes only under
//! its output directory and returns the files it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use marketstance_core::augment::{
    dose_count, mix_dose, run_augmentation, AnthropicClient, AuditLog, GenerationClient, MaskingClient, StubClient,
    SyntheticSample,
};
use marketstance_core::corpus::{
    class_distribution, ingest_comments, ingest_markets, open_source, project_two_class, read_jsonl, stratified_split,
    write_jsonl, ClassScheme, CorpusError, DatasetBundle, Domain, LabeledExample, MarketRequest, Provenance, Split,
    SplitRatios, StanceLabel,
};
use marketstance_core::evaluate::{
    evaluate_labels, per_market_report, run_ablation, run_cell, write_ablation_reports, write_confusion_csv,
    write_metrics_csv, write_per_market_csv, AblationCell, AblationConfig, AblationResult, SchemeBundles,
};
use marketstance_core::interpret::{
    aligned_rows, context_contrast_report, extract_cls_attention_at, select_disagreements, write_context_contrast,
    write_disagreement_report,
};
use marketstance_core::preprocess::{build_model_input, mask_bundle, mask_text, InputOptions};
use marketstance_core::trainer::{predict, split_examples, train, TrainConfig, TrainedModel, TrainingData};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{AugmentSettings, ClientKind, CorpusSettings, InterpretSettings, PreprocessSettings};
use crate::error::{in_stage, CliError};
use crate::plots;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const POOL_FILE: &str = "synthetic_pool.jsonl";

fn write_json(path: &Path, value: &impl Serialize, stage: &'static str) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(in_stage(stage))?;
    std::fs::write(path, text + "\n").map_err(in_stage(stage))?;
    Ok(path.to_path_buf())
}

fn create_dir(dir: &Path, stage: &'static str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(in_stage(stage))
}

pub fn load_dataset(path: &Path, stage: &'static str) -> Result<DatasetBundle, CliError> {
    DatasetBundle::load(path).map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
}

/// Fails when any of `inputs` is `output` or lies inside it.
pub fn ensure_not_input(output: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    let Ok(out) = output.canonicalize() else { return Ok(()) };
    for input in inputs {
        if input.canonicalize().is_ok_and(|p| p.starts_with(&out)) {
            return Err(CliError::Validation(format!(
                "refusing to overwrite input {}; choose another output directory",
                input.display()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MarketRow {
    market_id: String,
    domain: Domain,
    #[serde(default)]
    comment_parent_id: Option<String>,
}

pub fn read_market_requests(path: &Path) -> Result<Vec<MarketRequest>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<MarketRow>() {
        let row = row.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        out.push(MarketRequest {
            market_id: row.market_id,
            domain: row.domain,
            comment_parent_id: row.comment_parent_id.filter(|p| !p.is_empty()),
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<String, StanceLabel>, CliError> {
    #[derive(Deserialize)]
    struct Row {
        comment_id: String,
        label: String,
    }
    let invalid = |m: String| CliError::Validation(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(e.to_string()))?;
    let mut labels = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| invalid(e.to_string()))?;
        let label: StanceLabel = row.label.parse().map_err(|e: CorpusError| invalid(e.to_string()))?;
        if let Some(prev) = labels.insert(row.comment_id.clone(), label) {
            if prev != label {
                return Err(invalid(format!(
                    "comment {} labelled both {prev} and {label}",
                    row.comment_id
                )));
            }
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MarketIngestRow {
    pub market_id: String,
    pub domain: Option<Domain>,
    pub comments: usize,
    pub labelled: usize,
    pub unlabelled: usize,
    pub dropped_blank: usize,
    pub duplicates: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub source: String,
    pub markets_requested: usize,
    pub markets_ingested: usize,
    pub examples: usize,
    /// Labels whose comment id was not found in any ingested market.
    pub labels_without_comment: usize,
    pub markets: Vec<MarketIngestRow>,
}

/// Fetches markets and comments, joins the gold labels and writes the
/// dataset with its descriptive tables.
pub fn ingest(corpus: &CorpusSettings, out: &Path) -> Result<(IngestReport, Vec<PathBuf>), CliError> {
    const STAGE: &str = "ingest";
    let (bundle, report) = match &corpus.dataset {
        Some(path) => {
            let bundle = load_dataset(path, STAGE)?;
            let report = IngestReport {
                source: format!("dataset {}", path.display()),
                markets_requested: bundle.markets.len(),
                markets_ingested: bundle.markets.len(),
                examples: bundle.len(),
                ..Default::default()
            };
            (bundle, report)
        }
        None => ingest_from_source(corpus)?,
    };
    create_dir(out, STAGE)?;
    let mut files = Vec::new();
    let path = out.join(DATASET_FILE);
    bundle.save(&path).map_err(in_stage(STAGE))?;
    files.push(path);
    files.push(write_json(&out.join("ingest_report.json"), &report, STAGE)?);
    files.extend(write_corpus_tables(&bundle, out, STAGE)?);
    Ok((report, files))
}

fn ingest_from_source(corpus: &CorpusSettings) -> Result<(DatasetBundle, IngestReport), CliError> {
    const STAGE: &str = "ingest";
    let (markets_file, labels_file) = match (&corpus.markets_file, &corpus.labels_file) {
        (Some(m), Some(l)) => (m, l),
        _ => {
            return Err(CliError::Validation(
                "ingest needs a markets file and a labels file".into(),
            ))
        }
    };
    let requests = read_market_requests(markets_file)?;
    let labels = read_labels(labels_file)?;
    let api = &corpus.api;
    let source = open_source(api).map_err(in_stage(STAGE))?;
    let fetched = ingest_markets(&requests, source.as_ref(), api.parallelism).map_err(in_stage(STAGE))?;
    let mut report = IngestReport {
        source: match &api.fixtures {
            Some(dir) => format!("fixtures {}", dir.display()),
            None => format!("api {}", api.markets_base_url),
        },
        markets_requested: requests.len(),
        markets_ingested: fetched.markets.len(),
        ..Default::default()
    };
    let mut examples = Vec::new();
    let mut used = std::collections::HashSet::new();
    for request in &requests {
        let mut row = MarketIngestRow {
            market_id: request.market_id.clone(),
            ..Default::default()
        };
        if let Some(failure) = fetched.failures.iter().find(|f| f.market_id == request.market_id) {
            row.error = Some(failure.error.clone());
            report.markets.push(row);
            continue;
        }
        row.domain = Some(request.domain);
        match ingest_comments(request, &fetched.markets, source.as_ref(), api.page_size) {
            Ok(got) => {
                row.comments = got.comments.len();
                row.dropped_blank = got.dropped_blank;
                row.duplicates = got.duplicates;
                for comment in got.comments {
                    match labels.get(&comment.comment_id) {
                        Some(&label) => {
                            used.insert(comment.comment_id.clone());
                            row.labelled += 1;
                            examples.push(LabeledExample::real(comment, label));
                        }
                        None => row.unlabelled += 1,
                    }
                }
            }
            Err(e) if e.is_retryable() => return Err(CliError::stage(STAGE, e)),
            Err(e) => {
                log::warn!("comments for market {}: {e}", request.market_id);
                row.error = Some(e.to_string());
            }
        }
        report.markets.push(row);
    }
    report.labels_without_comment = labels.keys().filter(|id| !used.contains(*id)).count();
    report.examples = examples.len();
    if examples.is_empty() {
        return Err(CliError::stage(STAGE, "no labelled comments were ingested"));
    }
    let bundle = DatasetBundle::new(examples, ClassScheme::ThreeClass, fetched.markets).map_err(in_stage(STAGE))?;
    Ok((bundle, report))
}

/// `class_distribution.csv`, `stance_by_market.csv` and `stance_by_domain.csv`.
pub fn write_corpus_tables(bundle: &DatasetBundle, out: &Path, stage: &'static str) -> Result<Vec<PathBuf>, CliError> {
    let dist = class_distribution(bundle).map_err(in_stage(stage))?;
    let path = out.join("class_distribution.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(stage))?;
    w.write_record(["label", "count", "percent"]).map_err(in_stage(stage))?;
    for row in &dist.rows {
        w.write_record([
            row.label.as_str().to_string(),
            row.count.to_string(),
            format!("{:.2}", row.percent),
        ])
        .map_err(in_stage(stage))?;
    }
    w.flush().map_err(in_stage(stage))?;
    let mut files = vec![path];

    let labels = bundle.scheme.labels();
    let mut by_market: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut by_domain: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for ex in &bundle.examples {
        let Some(i) = bundle.scheme.index_of(ex.label) else {
            continue;
        };
        by_market.entry(ex.market_id()).or_insert_with(|| vec![0; labels.len()])[i] += 1;
        if let Some(m) = bundle.market(ex.market_id()) {
            by_domain.entry(m.domain).or_insert_with(|| vec![0; labels.len()])[i] += 1;
        }
    }
    let header = |key: &str| {
        std::iter::once(key.to_string())
            .chain(labels.iter().map(|l| l.as_str().to_string()))
            .chain(std::iter::once("total".to_string()))
            .collect::<Vec<_>>()
    };
    let row = |key: String, counts: &[usize]| {
        std::iter::once(key)
            .chain(counts.iter().map(ToString::to_string))
            .chain(std::iter::once(counts.iter().sum::<usize>().to_string()))
            .collect::<Vec<_>>()
    };
    let path = out.join("stance_by_market.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(stage))?;
    w.write_record(header("market_id")).map_err(in_stage(stage))?;
    for (m, counts) in &by_market {
        w.write_record(row(m.to_string(), counts)).map_err(in_stage(stage))?;
    }
    w.flush().map_err(in_stage(stage))?;
    files.push(path);
    let path = out.join("stance_by_domain.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(stage))?;
    w.write_record(header("domain")).map_err(in_stage(stage))?;
    for (d, counts) in &by_domain {
        w.write_record(row(d.to_string(), counts)).map_err(in_stage(stage))?;
    }
    w.flush().map_err(in_stage(stage))?;
    files.push(path);
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    pub context: bool,
    pub mask: bool,
    pub two_class: bool,
}

/// Masks entities, optionally projects to two classes, assigns the
/// stratified split (kept when already assigned) and writes the model inputs.
pub fn preprocess(
    input: &Path,
    settings: &PreprocessSettings,
    options: PreprocessOptions,
    ratios: SplitRatios,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "preprocess";
    let mut bundle = load_dataset(input, STAGE)?;
    let mut files = Vec::new();
    create_dir(out, STAGE)?;
    let needs_recognizer =
        (options.mask && !bundle.transform.as_ref().is_some_and(|t| t.masked)) || settings.mask_question;
    let recognizer = if needs_recognizer {
        Some(settings.build_recognizer()?)
    } else {
        None
    };
    if options.mask {
        if bundle.transform.as_ref().is_some_and(|t| t.masked) {
            log::info!("{} is already entity-masked", input.display());
        } else {
            let rec = recognizer.as_deref().expect("recognizer built for masking");
            let (masked, report) = mask_bundle(&bundle, rec).map_err(in_stage(STAGE))?;
            let path = out.join("masking_report.csv");
            report.write_csv(&path).map_err(in_stage(STAGE))?;
            files.push(path);
            log::info!(
                "masked {} entities in {} of {} comments",
                report.total_entities(),
                report.masked_comments,
                report.total_comments
            );
            bundle = masked;
        }
    }
    if settings.mask_question {
        let rec = recognizer.as_deref().expect("recognizer built for question masking");
        for market in &mut bundle.markets {
            market.question = mask_text(&market.question, rec).map_err(in_stage(STAGE))?;
        }
    }
    if options.two_class && bundle.scheme == ClassScheme::ThreeClass {
        bundle = project_two_class(&bundle).map_err(in_stage(STAGE))?;
        for ex in &mut bundle.examples {
            ex.split = Split::Unassigned;
        }
    }
    let assigned = bundle.examples.iter().all(|e| e.split != Split::Unassigned);
    if !assigned {
        bundle = stratified_split(&bundle, ratios, seed).map_err(in_stage(STAGE))?;
    }
    let path = out.join(DATASET_FILE);
    bundle.save(&path).map_err(in_stage(STAGE))?;
    files.push(path);

    let path = out.join("split_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(STAGE))?;
    w.write_record(["split", "label", "count"]).map_err(in_stage(STAGE))?;
    for split in [Split::Train, Split::Val, Split::Test] {
        for &label in bundle.scheme.labels() {
            let n = bundle.split(split).filter(|e| e.label == label).count();
            w.write_record([
                format!("{split:?}").to_lowercase(),
                label.as_str().to_string(),
                n.to_string(),
            ])
            .map_err(in_stage(STAGE))?;
        }
    }
    w.flush().map_err(in_stage(STAGE))?;
    files.push(path);

    let input_options = InputOptions {
        with_context: options.context,
        ..Default::default()
    };
    let inputs = bundle
        .examples
        .iter()
        .map(|ex| {
            let market = bundle.market(ex.market_id()).expect("validated bundle links markets");
            build_model_input(ex, market, input_options, None)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(in_stage(STAGE))?;
    let path = out.join("model_inputs.jsonl");
    write_jsonl(&path, &inputs).map_err(in_stage(STAGE))?;
    files.push(path);
    Ok(files)
}

fn build_client(settings: &AugmentSettings) -> Result<Box<dyn GenerationClient>, CliError> {
    match settings.client {
        ClientKind::Stub => {
            let client = match &settings.stub_replies {
                Some(path) => StubClient::from_file(path).map_err(|e| CliError::Validation(e.to_string()))?,
                None => StubClient::rule_based(),
            };
            Ok(Box::new(if settings.rule_fallback {
                client.with_rule_fallback()
            } else {
                client
            }))
        }
        ClientKind::Anthropic => Ok(Box::new(
            AnthropicClient::from_env().map_err(|e| CliError::Validation(e.to_string()))?,
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentReport {
    pub sources: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub generation_errors: usize,
    pub transport_errors: usize,
    pub masked: bool,
    pub dose: f64,
    pub mixed_in: usize,
}

/// Generates one Anti rewrite per real Pro training comment, filters it and
/// mixes `dose` of the accepted pool into the training split.
pub fn augment(
    input: &Path,
    settings: &AugmentSettings,
    preprocess: &PreprocessSettings,
    seed: u64,
    out: &Path,
) -> Result<(AugmentReport, Vec<PathBuf>), CliError> {
    const STAGE: &str = "augment";
    if !(0.0..=1.0).contains(&settings.dose) {
        return Err(CliError::Validation(format!("dose {} outside [0, 1]", settings.dose)));
    }
    let bundle = load_dataset(input, STAGE)?;
    if bundle.examples.iter().any(|e| e.split == Split::Unassigned) {
        return Err(CliError::stage(
            STAGE,
            "dataset has no split assignment; run preprocess first",
        ));
    }
    let sources: Vec<LabeledExample> = bundle
        .split(Split::Train)
        .filter(|e| e.label == StanceLabel::Pro && e.provenance == Provenance::Real)
        .cloned()
        .collect();
    let client = build_client(settings)?;
    let masked = bundle.transform.as_ref().is_some_and(|t| t.masked);
    let recognizer = if masked {
        Some(preprocess.build_recognizer()?)
    } else {
        None
    };
    let masking = recognizer.as_deref().map(|r| MaskingClient::new(client.as_ref(), r));
    let client: &dyn GenerationClient = match &masking {
        Some(m) => m,
        None => client.as_ref(),
    };
    create_dir(out, STAGE)?;
    let audit_path = out.join("audit.jsonl");
    let audit = AuditLog::to_file(&audit_path).map_err(in_stage(STAGE))?;
    let outcome = run_augmentation(&sources, &bundle.markets, &settings.augment_config(), client, &audit)
        .map_err(in_stage(STAGE))?;
    drop(audit);
    let accepted = outcome.accepted();
    let mixed = mix_dose(&bundle, &accepted, settings.dose, seed).map_err(in_stage(STAGE))?;

    let mut files = vec![audit_path];
    let path = out.join(POOL_FILE);
    write_jsonl(&path, &outcome.samples).map_err(in_stage(STAGE))?;
    files.push(path);
    let path = out.join(DATASET_FILE);
    mixed.save(&path).map_err(in_stage(STAGE))?;
    files.push(path);
    let s = &outcome.summary;
    let report = AugmentReport {
        sources: s.attempted,
        accepted: s.accepted,
        rejected: s.rejected.clone(),
        generation_errors: s.generation_errors,
        transport_errors: s.transport_errors,
        masked,
        dose: settings.dose,
        mixed_in: dose_count(settings.dose, accepted.len()),
    };
    files.push(write_json(&out.join("augment_summary.json"), &report, STAGE)?);
    Ok((report, files))
}

/// Trains one model on the dataset's train/val splits and saves the checkpoint.
pub fn train_model(input: &Path, config: &TrainConfig, context: bool, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "train";
    let bundle = load_dataset(input, STAGE)?;
    if bundle.scheme.num_classes() != config.num_classes {
        return Err(CliError::Validation(format!(
            "dataset uses the {} scheme but train.num_classes is {}",
            bundle.scheme, config.num_classes
        )));
    }
    let options = InputOptions {
        with_context: context,
        ..Default::default()
    };
    let data = TrainingData::from_bundle(&bundle, options, None).map_err(in_stage(STAGE))?;
    let model = train(&data, config).map_err(in_stage(STAGE))?;
    model.save(out).map_err(in_stage(STAGE))?;
    let path = out.join("training_history.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(STAGE))?;
    w.write_record(["epoch", "train_loss", "val_macro_f1", "param_hash", "best"])
        .map_err(in_stage(STAGE))?;
    for e in &model.history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_macro_f1.to_string(),
            e.param_hash.clone(),
            (e.epoch == model.history.best_epoch).to_string(),
        ])
        .map_err(in_stage(STAGE))?;
    }
    w.flush().map_err(in_stage(STAGE))?;
    log::info!(
        "trained {} epochs, best epoch {} (val macro F1 {:.4})",
        model.history.epochs.len(),
        model.history.best_epoch,
        model.history.best().map_or(f64::NAN, |b| b.val_macro_f1)
    );
    Ok(list_files(out))
}

fn load_model(dir: &Path, stage: &'static str) -> Result<TrainedModel, CliError> {
    TrainedModel::load(dir).map_err(|e| CliError::stage(stage, format!("{}: {e}", dir.display())))
}

/// Scores a checkpoint on the test split of `input`.
pub fn evaluate(ckpt: &Path, input: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "evaluate";
    let model = load_model(ckpt, STAGE)?;
    let bundle = load_dataset(input, STAGE)?;
    if bundle.scheme != model.scheme {
        return Err(CliError::Validation(format!(
            "checkpoint predicts the {} scheme but the dataset uses {}",
            model.scheme, bundle.scheme
        )));
    }
    let test = split_examples(&bundle, Split::Test, model.input_options, None).map_err(in_stage(STAGE))?;
    if test.is_empty() {
        return Err(CliError::stage(STAGE, "dataset has an empty test split"));
    }
    let inputs: Vec<_> = test.iter().map(|e| e.input.clone()).collect();
    let predictions = predict(&model, bundle.scheme, &inputs).map_err(in_stage(STAGE))?;
    let preds: Vec<_> = predictions.iter().map(|p| p.label).collect();
    let golds: Vec<_> = test.iter().map(|e| e.label).collect();
    let market_ids: Vec<_> = inputs.iter().map(|i| i.market_id.clone()).collect();
    let report = evaluate_labels(bundle.scheme, &preds, &golds).map_err(in_stage(STAGE))?;
    let per_market =
        per_market_report(bundle.scheme, &preds, &golds, &market_ids, &bundle.markets).map_err(in_stage(STAGE))?;
    create_dir(out, STAGE)?;
    write_metrics_csv(&report, out.join("metrics.csv")).map_err(in_stage(STAGE))?;
    write_confusion_csv(&report, out.join("confusion.csv")).map_err(in_stage(STAGE))?;
    write_per_market_csv(&per_market, out.join("per_market.csv")).map_err(in_stage(STAGE))?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path).map_err(in_stage(STAGE))?;
    let mut header = vec![
        "comment_id".to_string(),
        "market_id".into(),
        "gold".into(),
        "predicted".into(),
    ];
    header.extend(
        bundle
            .scheme
            .labels()
            .iter()
            .map(|l| format!("p_{}", l.as_str().to_lowercase())),
    );
    w.write_record(&header).map_err(in_stage(STAGE))?;
    for ((input, pred), gold) in inputs.iter().zip(&predictions).zip(&golds) {
        let mut row = vec![
            input.comment_id.clone(),
            input.market_id.clone(),
            gold.as_str().to_string(),
            pred.label.as_str().to_string(),
        ];
        row.extend(pred.probabilities.iter().map(|p| p.to_string()));
        w.write_record(&row).map_err(in_stage(STAGE))?;
    }
    w.flush().map_err(in_stage(STAGE))?;
    log::info!("test macro F1 {:.4}, accuracy {:.4}", report.macro_f1, report.accuracy);
    Ok(list_files(out))
}

/// Runs the grid on fixed per-scheme splits and writes its reports.
pub fn ablate(
    input: &Path,
    pool: &Path,
    grid: &AblationConfig,
    ratios: SplitRatios,
    seed: u64,
    out: &Path,
) -> Result<(AblationResult, Vec<PathBuf>), CliError> {
    const STAGE: &str = "ablate";
    grid.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let bundle = load_dataset(input, STAGE)?;
    let samples: Vec<SyntheticSample> =
        read_jsonl(pool).map_err(|e| CliError::stage(STAGE, format!("{}: {e}", pool.display())))?;
    let bundles = SchemeBundles::split(&bundle, ratios, seed).map_err(in_stage(STAGE))?;
    let result = run_ablation(&bundles, &samples, grid).map_err(in_stage(STAGE))?;
    create_dir(out, STAGE)?;
    write_ablation_reports(&result, out).map_err(in_stage(STAGE))?;
    Ok((result, list_files(out)))
}

/// Disagreements between two checkpoints on the test split, with per-case
/// attention tables and heat strips, plus context contrasts when exactly one
/// model was trained with context.
pub fn interpret_models(
    model_a: &TrainedModel,
    model_b: &TrainedModel,
    bundle: &DatasetBundle,
    settings: &InterpretSettings,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "interpret";
    for (tag, model) in [("a", model_a), ("b", model_b)] {
        if model.scheme != bundle.scheme {
            return Err(CliError::Validation(format!(
                "model {tag} predicts the {} scheme but the dataset uses {}",
                model.scheme, bundle.scheme
            )));
        }
    }
    let test_a = split_examples(bundle, Split::Test, model_a.input_options, None).map_err(in_stage(STAGE))?;
    let test_b = split_examples(bundle, Split::Test, model_b.input_options, None).map_err(in_stage(STAGE))?;
    let inputs_a: Vec<_> = test_a.iter().map(|e| e.input.clone()).collect();
    let inputs_b: Vec<_> = test_b.iter().map(|e| e.input.clone()).collect();
    let golds: Vec<_> = test_a.iter().map(|e| e.label).collect();
    let mut cases = select_disagreements(model_a, &inputs_a, model_b, &inputs_b, &golds).map_err(in_stage(STAGE))?;
    let total = cases.len();
    cases.truncate(settings.max_cases);
    if let Some(layer) = settings.layer {
        for case in &mut cases {
            case.record_a =
                extract_cls_attention_at(model_a, &case.input_a, Some(layer), "a").map_err(in_stage(STAGE))?;
            case.record_b =
                extract_cls_attention_at(model_b, &case.input_b, Some(layer), "b").map_err(in_stage(STAGE))?;
        }
    }
    let dir = out.join("disagreements");
    write_disagreement_report(&cases, &dir).map_err(in_stage(STAGE))?;
    for (i, case) in cases.iter().enumerate() {
        let svg = plots::heat_strip_svg(&aligned_rows(&case.record_a, &case.record_b), ["model A", "model B"]);
        std::fs::write(dir.join(format!("case_{:03}.svg", i + 1)), svg).map_err(in_stage(STAGE))?;
    }

    let mut contrasts = 0;
    let pair = match (model_a.input_options.with_context, model_b.input_options.with_context) {
        (false, true) => Some((model_a, model_b)),
        (true, false) => Some((model_b, model_a)),
        _ => None,
    };
    if let Some((without, with)) = pair {
        let dir = out.join("context_contrast");
        for ex in bundle.split(Split::Test).take(settings.contrast_examples) {
            let market = bundle.market(ex.market_id()).expect("validated bundle links markets");
            let contrast = context_contrast_report(without, with, ex, market).map_err(in_stage(STAGE))?;
            write_context_contrast(&contrast, &dir, ex.id()).map_err(in_stage(STAGE))?;
            let svg = plots::heat_strip_svg(
                &aligned_rows(&contrast.without_context, &contrast.with_context),
                ["without context", "with context"],
            );
            std::fs::write(dir.join(format!("{}_strip.svg", ex.id())), svg).map_err(in_stage(STAGE))?;
            contrasts += 1;
        }
    }
    create_dir(out, STAGE)?;
    write_json(
        &out.join("interpret_summary.json"),
        &json!({
            "test_examples": golds.len(),
            "disagreements": total,
            "cases_written": cases.len(),
            "context_contrasts": contrasts,
            "layer": settings.layer,
        }),
        STAGE,
    )?;
    Ok(list_files(out))
}

pub fn interpret(
    ckpt_a: &Path,
    ckpt_b: &Path,
    input: &Path,
    settings: &InterpretSettings,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let a = load_model(ckpt_a, "interpret")?;
    let b = load_model(ckpt_b, "interpret")?;
    let bundle = load_dataset(input, "interpret")?;
    interpret_models(&a, &b, &bundle, settings, out)
}

/// Trains the without/with-context pair of `settings.scheme` at
/// `settings.dose` exactly as the grid does, saves both checkpoints and
/// compares them.
pub fn interpret_grid_pair(
    input: &Path,
    pool: &Path,
    train_config: &TrainConfig,
    settings: &InterpretSettings,
    ratios: SplitRatios,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "interpret";
    let bundle = load_dataset(input, STAGE)?;
    let samples: Vec<SyntheticSample> =
        read_jsonl(pool).map_err(|e| CliError::stage(STAGE, format!("{}: {e}", pool.display())))?;
    let bundles = SchemeBundles::split(&bundle, ratios, seed).map_err(in_stage(STAGE))?;
    let scheme_bundle = bundles.get(settings.scheme);
    let usable = marketstance_core::evaluate::usable_pool(scheme_bundle, &samples);
    let mut models = Vec::new();
    for with_context in [false, true] {
        let cell = AblationCell {
            scheme: settings.scheme,
            with_context,
            dose: settings.dose,
            seed,
        };
        let (_, model) = run_cell(scheme_bundle, &usable, cell, train_config).map_err(in_stage(STAGE))?;
        let dir = out.join(if with_context {
            "model_with_context"
        } else {
            "model_without_context"
        });
        model.save(&dir).map_err(in_stage(STAGE))?;
        models.push(model);
    }
    interpret_models(&models[0], &models[1], scheme_bundle, settings, out)
}

/// Every regular file under `dir`, sorted.
pub fn list_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}
