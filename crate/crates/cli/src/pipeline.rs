//! `run-all`: ingest, preprocess, augment, ablate, interpret and report in
//! order, with each stage skipped when a stamp under `.cache/` records the
//! same key (hash of stage config and input files) and its outputs are intact.

use std::path::{Path, PathBuf};

use marketstance_core::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{in_stage, CliError};
use crate::plots;
use crate::stages::{self, PreprocessOptions, DATASET_FILE, POOL_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";
const CACHE_DIR: &str = ".cache";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output root, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    /// Finished with some grid cells failed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub key: String,
    pub files: Vec<FileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: FileEntry,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    /// Stage failure or partial grid; `None` on full success.
    pub error: Option<CliError>,
}

impl PipelineOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, CliError::exit_code)
    }
}

fn file_hash(path: &Path) -> Result<String, CliError> {
    std::fs::read(path)
        .map(sha256_hex)
        .map_err(|e| CliError::stage("setup", format!("{}: {e}", path.display())))
}

fn optional_hash(path: Option<&PathBuf>) -> Result<Value, CliError> {
    Ok(match path {
        Some(p) if p.is_dir() => {
            let mut parts = Vec::new();
            for f in stages::list_files(p) {
                let rel = f.strip_prefix(p).unwrap_or(&f).to_string_lossy().replace('\\', "/");
                parts.push(json!([rel, file_hash(&f)?]));
            }
            json!(parts)
        }
        Some(p) => json!(file_hash(p)?),
        None => Value::Null,
    })
}

fn stage_key(name: &str, parts: Value) -> String {
    sha256_hex(json!({ "stage": name, "inputs": parts }).to_string())
}

fn entry(root: &Path, path: &Path) -> Result<FileEntry, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::stage("manifest", format!("{}: {e}", path.display())))?;
    Ok(FileEntry {
        path: path
            .strip_prefix(root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

#[derive(Serialize, Deserialize)]
struct Stamp {
    key: String,
    files: Vec<FileEntry>,
}

struct Runner<'a> {
    root: &'a Path,
    records: Vec<StageRecord>,
    executed: Vec<String>,
    skipped: Vec<String>,
}

/// What a stage body reports besides its files.
enum StageEnd {
    Done,
    Partial(CliError),
}

impl Runner<'_> {
    fn stamp_path(&self, name: &str) -> PathBuf {
        self.root.join(CACHE_DIR).join(format!("{name}.json"))
    }

    fn cached(&self, name: &str, key: &str) -> Option<Vec<FileEntry>> {
        let text = std::fs::read_to_string(self.stamp_path(name)).ok()?;
        let stamp: Stamp = serde_json::from_str(&text).ok()?;
        if stamp.key != key {
            return None;
        }
        let intact = stamp
            .files
            .iter()
            .all(|f| std::fs::read(self.root.join(&f.path)).is_ok_and(|b| sha256_hex(&b) == f.sha256));
        intact.then_some(stamp.files)
    }

    /// Runs `body` in a fresh `<root>/<name>` directory unless cached.
    /// Returns the partial-grid error, if any, so later stages still run.
    fn stage(
        &mut self,
        name: &'static str,
        key: String,
        body: impl FnOnce(&Path) -> Result<StageEnd, CliError>,
    ) -> Result<Option<CliError>, CliError> {
        if let Some(files) = self.cached(name, &key) {
            log::info!("stage {name}: inputs unchanged, skipping");
            self.skipped.push(name.to_string());
            self.records.push(StageRecord {
                name: name.to_string(),
                status: StageStatus::Completed,
                key,
                files,
                error: None,
            });
            return Ok(None);
        }
        log::info!("stage {name}: running");
        self.executed.push(name.to_string());
        let dir = self.root.join(name);
        let _ = std::fs::remove_file(self.stamp_path(name));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(in_stage(name))?;
        }
        std::fs::create_dir_all(&dir).map_err(in_stage(name))?;
        let result = body(&dir);
        let files = stages::list_files(&dir)
            .iter()
            .map(|p| entry(self.root, p))
            .collect::<Result<Vec<_>, _>>()?;
        let (status, error, partial) = match result {
            Ok(StageEnd::Done) => (StageStatus::Completed, None, None),
            Ok(StageEnd::Partial(e)) => (StageStatus::Partial, Some(e.to_string()), Some(e)),
            Err(e) => {
                self.records.push(StageRecord {
                    name: name.to_string(),
                    status: StageStatus::Failed,
                    key,
                    files,
                    error: Some(e.to_string()),
                });
                return Err(e);
            }
        };
        if status == StageStatus::Completed {
            let stamp = Stamp {
                key: key.clone(),
                files: files.clone(),
            };
            let text = serde_json::to_string_pretty(&stamp).map_err(in_stage(name))?;
            std::fs::write(self.stamp_path(name), text).map_err(in_stage(name))?;
        }
        self.records.push(StageRecord {
            name: name.to_string(),
            status,
            key,
            files,
            error,
        });
        Ok(partial)
    }
}

fn run_stages(config: &PipelineConfig, runner: &mut Runner) -> Result<Option<CliError>, CliError> {
    let root = runner.root.to_path_buf();
    let seed = config.seed;
    let ratios = config.corpus.split;
    let corpus = &config.corpus;

    let key = stage_key(
        "ingest",
        json!({
            "corpus": corpus,
            "markets": optional_hash(corpus.markets_file.as_ref())?,
            "labels": optional_hash(corpus.labels_file.as_ref())?,
            "dataset": optional_hash(corpus.dataset.as_ref())?,
            "fixtures": optional_hash(corpus.api.fixtures.as_ref())?,
        }),
    );
    runner.stage("ingest", key, |dir| {
        stages::ingest(corpus, dir)?;
        Ok(StageEnd::Done)
    })?;
    let ingested = root.join("ingest").join(DATASET_FILE);

    let key = stage_key(
        "preprocess",
        json!({
            "settings": config.preprocess,
            "split": ratios,
            "seed": seed,
            "dataset": file_hash(&ingested)?,
            "gazetteer": optional_hash(config.preprocess.gazetteer.as_ref())?,
        }),
    );
    runner.stage("preprocess", key, |dir| {
        let options = PreprocessOptions {
            context: config.preprocess.context,
            mask: config.preprocess.mask,
            two_class: false,
        };
        stages::preprocess(&ingested, &config.preprocess, options, ratios, seed, dir)?;
        Ok(StageEnd::Done)
    })?;
    let dataset = root.join("preprocess").join(DATASET_FILE);
    let dataset_hash = file_hash(&dataset)?;

    let key = stage_key(
        "augment",
        json!({
            "settings": config.augment,
            "preprocess": config.preprocess,
            "seed": seed,
            "dataset": dataset_hash,
            "stub_replies": optional_hash(config.augment.stub_replies.as_ref())?,
        }),
    );
    runner.stage("augment", key, |dir| {
        stages::augment(&dataset, &config.augment, &config.preprocess, seed, dir)?;
        Ok(StageEnd::Done)
    })?;
    let pool = root.join("augment").join(POOL_FILE);
    let pool_hash = file_hash(&pool)?;

    let mut grid = config.ablation_config();
    let jobs = grid.jobs;
    grid.jobs = 0;
    let key = stage_key(
        "ablate",
        json!({ "grid": grid, "split": ratios, "seed": seed, "dataset": dataset_hash, "pool": pool_hash }),
    );
    grid.jobs = jobs;
    let partial = runner.stage("ablate", key, |dir| {
        let (result, _) = stages::ablate(&dataset, &pool, &grid, ratios, seed, dir)?;
        let failed = result.failed().count();
        Ok(if failed == 0 {
            StageEnd::Done
        } else {
            StageEnd::Partial(CliError::PartialGrid {
                failed,
                total: result.cells.len(),
            })
        })
    })?;

    let key = stage_key(
        "interpret",
        json!({
            "settings": config.interpret,
            "train": config.train,
            "split": ratios,
            "seed": seed,
            "dataset": dataset_hash,
            "pool": pool_hash,
        }),
    );
    runner.stage("interpret", key, |dir| {
        stages::interpret_grid_pair(&dataset, &pool, &config.train, &config.interpret, ratios, seed, dir)?;
        Ok(StageEnd::Done)
    })?;

    let ablate_dir = root.join("ablate");
    let ingest_dir = root.join("ingest");
    let mut report_inputs = Vec::new();
    for f in stages::list_files(&ablate_dir)
        .into_iter()
        .chain(stages::list_files(&ingest_dir))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
    {
        report_inputs.push(json!([entry(&root, &f)?.path, file_hash(&f)?]));
    }
    runner.stage("report", stage_key("report", json!(report_inputs)), |dir| {
        plots::emit_plots(&ablate_dir, dir).map_err(in_stage("report"))?;
        plots::emit_stance_plots(&ingest_dir, dir).map_err(in_stage("report"))?;
        Ok(StageEnd::Done)
    })?;
    Ok(partial)
}

/// Validates `config`, then runs every stage under `config.output_root`.
///
/// Returns `Err` only for validation problems, in which case nothing has
/// been written. Stage failures and partial grids are reported through
/// [`PipelineOutcome::error`] after the manifest is written.
pub fn run_full_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome, CliError> {
    config.validate()?;
    let effective = config.effective_toml()?;
    let root = config.output_root.as_path();
    std::fs::create_dir_all(root.join(CACHE_DIR)).map_err(in_stage("setup"))?;
    let config_path = root.join(EFFECTIVE_CONFIG_FILE);
    std::fs::write(&config_path, effective).map_err(in_stage("setup"))?;

    let mut runner = Runner {
        root,
        records: Vec::new(),
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let error = match run_stages(config, &mut runner) {
        Ok(partial) => partial,
        Err(e) => Some(e),
    };
    let manifest = Manifest {
        config: entry(root, &config_path)?,
        stages: runner.records,
    };
    let manifest_path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(in_stage("manifest"))?;
    std::fs::write(&manifest_path, text + "\n").map_err(in_stage("manifest"))?;
    Ok(PipelineOutcome {
        manifest,
        manifest_path,
        executed: runner.executed,
        skipped: runner.skipped,
        error,
    })
}
