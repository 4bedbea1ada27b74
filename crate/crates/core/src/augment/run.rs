use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_flip_prompt, quality_verdict_with, AugmentError, FilterThresholds, FilterVerdict, FlipPrompt,
    GenerationClient, GenerationConfig, GenerationError, GenerationRequest, RejectionRule,
};
use crate::corpus::{Comment, DatasetBundle, LabeledExample, Market, Provenance, Split, StanceLabel};
use crate::util::{parallel_map, RateLimiter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub source_id: String,
    pub prompt_hash: String,
    pub attempt: u32,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub raw_output: Option<String>,
    pub output_tokens: Option<u32>,
    pub error: Option<String>,
    pub accepted: Option<bool>,
    pub rejected_by: Option<RejectionRule>,
    pub length_ratio: Option<f64>,
    pub overlap: Option<f64>,
    pub requested_at: DateTime<Utc>,
    pub completed_at: DateTime<Utc>,
}

/// Append-only JSONL sink shared by generation workers.
pub struct AuditLog {
    sink: Mutex<Option<BufWriter<File>>>,
    records: Mutex<Vec<AuditRecord>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self {
            sink: Mutex::new(None),
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sink: Mutex::new(Some(BufWriter::new(file))),
            records: Mutex::new(Vec::new()),
        })
    }

    pub fn append(&self, record: AuditRecord) -> Result<(), AugmentError> {
        if let Some(w) = self.sink.lock().expect("audit sink poisoned").as_mut() {
            serde_json::to_writer(&mut *w, &record).map_err(|e| AugmentError::Config(e.to_string()))?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.records.lock().expect("audit records poisoned").push(record);
        Ok(())
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().expect("audit records poisoned").clone()
    }
}

/// One generation call; the returned text is trimmed and must be non-empty.
pub fn generate_flip(
    source_id: &str,
    prompt: &FlipPrompt,
    config: &GenerationConfig,
    client: &dyn GenerationClient,
) -> Result<(String, Option<u32>), GenerationError> {
    let request = GenerationRequest {
        source_id: source_id.to_string(),
        prompt: prompt.clone(),
        config: config.clone(),
    };
    let response = client.generate(&request)?;
    let text = response.text.trim();
    if text.is_empty() {
        return Err(GenerationError::Empty);
    }
    Ok((text.to_string(), response.output_tokens))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub source_id: String,
    pub market_id: String,
    pub source_text: String,
    /// Generated text; empty when generation failed.
    pub text: String,
    pub verdict: Option<FilterVerdict>,
    pub error: Option<String>,
    pub gen_config: GenerationConfig,
}

impl SyntheticSample {
    pub fn is_accepted(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.accepted)
    }

    pub fn synthetic_id(&self) -> String {
        format!("syn-{}", self.source_id)
    }

    /// The sample as an Anti training example.
    pub fn to_example(&self) -> LabeledExample {
        LabeledExample {
            comment: Comment::new(self.synthetic_id(), self.market_id.clone(), self.text.clone()),
            label: StanceLabel::Anti,
            provenance: Provenance::Synthetic,
            split: Split::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub generation: GenerationConfig,
    pub thresholds: FilterThresholds,
    pub parallelism: usize,
    pub min_request_interval_ms: u64,
    /// Wait before the single retry after a transport failure.
    pub retry_backoff_ms: u64,
    /// Abort when more than this share of sources fail at transport level.
    pub max_transport_failure_rate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            generation: GenerationConfig::default(),
            thresholds: FilterThresholds::default(),
            parallelism: 4,
            min_request_interval_ms: 0,
            retry_backoff_ms: 2_000,
            max_transport_failure_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AugmentationSummary {
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub generation_errors: usize,
    pub transport_errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationOutcome {
    pub samples: Vec<SyntheticSample>,
    pub summary: AugmentationSummary,
}

impl AugmentationOutcome {
    pub fn accepted(&self) -> Vec<SyntheticSample> {
        self.samples.iter().filter(|s| s.is_accepted()).cloned().collect()
    }
}

fn market_of<'a>(markets: &'a [Market], example: &LabeledExample) -> Result<&'a Market, AugmentError> {
    markets
        .iter()
        .find(|m| m.market_id == example.market_id())
        .ok_or_else(|| AugmentError::UnknownMarket(example.market_id().to_string()))
}

/// Generates one Anti rewrite per Pro training example and filters it.
///
/// Each source gets one retry after a transport failure and none after a
/// filter rejection. Per-source failures are recorded in the returned samples;
/// the call fails only when transport failures exceed the configured share.
pub fn run_augmentation(
    pro_examples: &[LabeledExample],
    markets: &[Market],
    config: &AugmentConfig,
    client: &dyn GenerationClient,
    audit: &AuditLog,
) -> Result<AugmentationOutcome, AugmentError> {
    config.generation.validate()?;
    let mut prompts = Vec::with_capacity(pro_examples.len());
    for ex in pro_examples {
        if ex.split != Split::Train || ex.provenance != Provenance::Real {
            return Err(AugmentError::NotTrain(ex.id().to_string()));
        }
        prompts.push(build_flip_prompt(ex, market_of(markets, ex)?)?);
    }
    let limiter = RateLimiter::new(Duration::from_millis(config.min_request_interval_ms));
    let jobs: Vec<(&LabeledExample, FlipPrompt)> = pro_examples.iter().zip(prompts).collect();
    let results = parallel_map(&jobs, config.parallelism, |(ex, prompt)| {
        let mut attempt = 0;
        loop {
            attempt += 1;
            limiter.acquire();
            let requested_at = Utc::now();
            let result = generate_flip(ex.id(), prompt, &config.generation, client);
            let completed_at = Utc::now();
            let verdict = result
                .as_ref()
                .ok()
                .map(|(text, _)| quality_verdict_with(&ex.comment.text, text, &config.thresholds));
            let g = &config.generation;
            let record = AuditRecord {
                source_id: ex.id().to_string(),
                prompt_hash: prompt.hash(),
                attempt,
                model_id: g.model_id.clone(),
                temperature: g.temperature,
                top_p: g.top_p,
                max_output_tokens: g.max_output_tokens,
                raw_output: result.as_ref().ok().map(|(t, _)| t.clone()),
                output_tokens: result.as_ref().ok().and_then(|(_, n)| *n),
                error: result.as_ref().err().map(ToString::to_string),
                accepted: verdict.as_ref().map(|v| v.accepted),
                rejected_by: verdict.as_ref().and_then(|v| v.rejected_by),
                length_ratio: verdict.as_ref().map(|v| v.length_ratio),
                overlap: verdict.as_ref().map(|v| v.overlap),
                requested_at,
                completed_at,
            };
            if let Err(e) = audit.append(record) {
                log::error!("audit log write failed: {e}");
            }
            match result {
                Err(e) if e.is_transport() && attempt < 2 => {
                    std::thread::sleep(Duration::from_millis(config.retry_backoff_ms));
                }
                other => return (other.map(|(t, _)| t), verdict),
            }
        }
    });

    let mut summary = AugmentationSummary {
        attempted: pro_examples.len(),
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(results.len());
    for ((ex, _), (result, verdict)) in jobs.iter().zip(results) {
        let (text, error) = match result {
            Ok(t) => (t, None),
            Err(e) => {
                summary.generation_errors += 1;
                if e.is_transport() {
                    summary.transport_errors += 1;
                }
                (String::new(), Some(e.to_string()))
            }
        };
        match &verdict {
            Some(v) if v.accepted => summary.accepted += 1,
            Some(v) => {
                let rule = v.rejected_by.map_or("unknown", RejectionRule::as_str);
                *summary.rejected.entry(rule.to_string()).or_default() += 1;
            }
            None => {}
        }
        samples.push(SyntheticSample {
            source_id: ex.id().to_string(),
            market_id: ex.market_id().to_string(),
            source_text: ex.comment.text.clone(),
            text,
            verdict,
            error,
            gen_config: config.generation.clone(),
        });
    }
    if summary.attempted > 0
        && summary.transport_errors as f64 / summary.attempted as f64 > config.max_transport_failure_rate
    {
        return Err(AugmentError::TransportFailureRate {
            failed: summary.transport_errors,
            attempted: summary.attempted,
        });
    }
    Ok(AugmentationOutcome { samples, summary })
}

/// Number of synthetic samples a dose adds.
pub fn dose_count(dose: f64, available: usize) -> usize {
    (dose * available as f64 + 1e-9).floor() as usize
}

/// Adds `floor(dose * |accepted|)` synthetic Anti examples, drawn uniformly
/// without replacement under `seed`, to the training split of `bundle`.
pub fn mix_dose(
    bundle: &DatasetBundle,
    accepted: &[SyntheticSample],
    dose: f64,
    seed: u64,
) -> Result<DatasetBundle, AugmentError> {
    if !(0.0..=1.0).contains(&dose) {
        return Err(AugmentError::Dose(dose));
    }
    if ![0.0, 0.5, 1.0].contains(&dose) {
        log::warn!("dose {dose} is outside the standard 0 / 0.5 / 1.0 levels");
    }
    if let Some(s) = accepted.iter().find(|s| !s.is_accepted()) {
        return Err(AugmentError::NotAccepted(s.source_id.clone()));
    }
    let count = dose_count(dose, accepted.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, accepted.len(), count).into_vec();
    chosen.sort_unstable();
    let mut out = bundle.clone();
    out.examples
        .extend(chosen.into_iter().map(|i| accepted[i].to_example()));
    check_no_leakage(&out)?;
    out.validate()?;
    Ok(out)
}

/// Fails if any synthetic example sits outside the training split.
pub fn check_no_leakage(bundle: &DatasetBundle) -> Result<(), AugmentError> {
    match bundle
        .examples
        .iter()
        .find(|e| e.provenance == Provenance::Synthetic && e.split != Split::Train)
    {
        Some(e) => Err(AugmentError::Leakage(e.id().to_string())),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dose_counts_use_floor() {
        assert_eq!(dose_count(0.5, 216), 108);
        assert_eq!(dose_count(1.0, 216), 216);
        assert_eq!(dose_count(0.0, 216), 0);
        assert_eq!(dose_count(0.5, 7), 3);
    }
}
