//! Command-line front end: one subcommand per pipeline stage plus `run-all`.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod pipeline;
pub mod plots;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{ClientKind, Overrides, PipelineConfig, Section};
use error::{in_stage, CliError};
use stages::PreprocessOptions;

#[derive(Debug, Parser)]
#[command(
    name = "marketstance",
    version,
    about = "Stance detection on prediction-market comments"
)]
pub struct Cli {
    /// Global seed; also used for training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid cells trained concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// `--context` / `--no-context` style switch; unset keeps the configured value.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct ContextSwitch {
    /// Prepend the market question to each comment.
    #[arg(long, overrides_with = "no_context")]
    pub context: bool,
    #[arg(long, overrides_with = "context")]
    pub no_context: bool,
}

impl ContextSwitch {
    fn resolve(self, default: bool) -> bool {
        if self.no_context {
            false
        } else {
            self.context || default
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch markets and comments and join them with labels.
    Ingest {
        /// CSV of `market_id,domain[,comment_parent_id]`.
        #[arg(long)]
        markets: PathBuf,
        /// CSV of `comment_id,label`.
        #[arg(long)]
        labels: PathBuf,
        /// Read API records from this directory instead of HTTP.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask entities, assign splits and build model inputs.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        context: ContextSwitch,
        #[arg(long, overrides_with = "no_mask")]
        mask: bool,
        #[arg(long, overrides_with = "mask")]
        no_mask: bool,
        /// Drop Neutral and keep Pro/Anti.
        #[arg(long)]
        two_class: bool,
    },
    /// Generate, filter and mix synthetic Anti comments.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of the accepted pool mixed into training.
        #[arg(long)]
        dose: Option<f64>,
        /// Canned replies JSON; selects the offline client.
        #[arg(long)]
        stub: Option<PathBuf>,
    },
    /// Fine-tune one classifier.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        context: ContextSwitch,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scheme x context x dose x seed grid.
    Ablate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Synthetic pool from `augment`.
        #[arg(long)]
        synthetic: PathBuf,
        /// Number of consecutive seeds starting at the global seed.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare attention of two checkpoints where they disagree.
    Interpret {
        #[arg(long)]
        ckpt_a: PathBuf,
        #[arg(long)]
        ckpt_b: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        max_cases: Option<usize>,
    },
    /// Render SVG plots from ablation (and optionally ingest) tables.
    Report {
        /// Directory written by `ablate`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory written by `ingest`, for stance distribution bars.
        #[arg(long)]
        stance: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage in order, skipping those whose inputs are unchanged.
    RunAll {
        /// Output root; overrides `output_root`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, output_root: Option<PathBuf>) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(&Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        output_root,
    });
    Ok(config)
}

fn guard(out: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    stages::ensure_not_input(out, inputs)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let output_root = match &cli.command {
        Command::RunAll { out } => out.clone(),
        _ => None,
    };
    let mut config = load_config(&cli, output_root)?;
    match cli.command {
        Command::Ingest {
            markets,
            labels,
            fixtures,
            out,
        } => {
            config.corpus.markets_file = Some(markets);
            config.corpus.labels_file = Some(labels);
            config.corpus.dataset = None;
            if fixtures.is_some() {
                config.corpus.api.fixtures = fixtures;
            }
            config.validate_sections(&[Section::Corpus])?;
            let corpus = &config.corpus;
            let inputs = [corpus.markets_file.as_deref(), corpus.labels_file.as_deref()];
            guard(&out, &inputs.into_iter().flatten().collect::<Vec<_>>())?;
            let (report, _) = stages::ingest(corpus, &out)?;
            log::info!(
                "ingested {} of {} markets, {} labelled examples",
                report.markets_ingested,
                report.markets_requested,
                report.examples
            );
        }
        Command::Preprocess {
            input,
            out,
            context,
            mask,
            no_mask,
            two_class,
        } => {
            let masked = if no_mask { false } else { mask || config.preprocess.mask };
            config.preprocess.mask = masked;
            config.validate_sections(&[Section::Preprocess])?;
            guard(&out, &[&input])?;
            let options = PreprocessOptions {
                context: context.resolve(config.preprocess.context),
                mask: masked,
                two_class,
            };
            stages::preprocess(
                &input,
                &config.preprocess,
                options,
                config.corpus.split,
                config.seed,
                &out,
            )?;
        }
        Command::Augment { input, out, dose, stub } => {
            if let Some(dose) = dose {
                config.augment.dose = dose;
            }
            if let Some(stub) = stub {
                config.augment.client = ClientKind::Stub;
                config.augment.stub_replies = Some(stub);
            }
            config.validate_sections(&[Section::Augment, Section::Preprocess])?;
            guard(&out, &[&input])?;
            let (report, _) = stages::augment(&input, &config.augment, &config.preprocess, config.seed, &out)?;
            log::info!(
                "{} sources, {} accepted, {} mixed into training",
                report.sources,
                report.accepted,
                report.mixed_in
            );
        }
        Command::Train { input, out, context } => {
            config.validate_sections(&[Section::Train])?;
            guard(&out, &[&input])?;
            stages::train_model(&input, &config.train, context.resolve(config.preprocess.context), &out)?;
        }
        Command::Evaluate { ckpt, input, out } => {
            guard(&out, &[&ckpt, &input])?;
            stages::evaluate(&ckpt, &input, &out)?;
        }
        Command::Ablate {
            input,
            synthetic,
            seeds,
            out,
        } => {
            if let Some(n) = seeds {
                config.ablation.seeds.clear();
                config.ablation.num_seeds = n;
            }
            config.validate_sections(&[Section::Train, Section::Ablation])?;
            guard(&out, &[&input, &synthetic])?;
            let grid = config.ablation_config();
            let (result, _) = stages::ablate(&input, &synthetic, &grid, config.corpus.split, config.seed, &out)?;
            let failed = result.failed().count();
            if failed > 0 {
                return Err(CliError::PartialGrid {
                    failed,
                    total: result.cells.len(),
                });
            }
        }
        Command::Interpret {
            ckpt_a,
            ckpt_b,
            input,
            out,
            layer,
            max_cases,
        } => {
            if layer.is_some() {
                config.interpret.layer = layer;
            }
            if let Some(n) = max_cases {
                config.interpret.max_cases = n;
            }
            config.validate_sections(&[Section::Interpret])?;
            guard(&out, &[&ckpt_a, &ckpt_b, &input])?;
            stages::interpret(&ckpt_a, &ckpt_b, &input, &config.interpret, &out)?;
        }
        Command::Report { input, stance, out } => {
            guard(&out, &[&input])?;
            plots::emit_plots(&input, &out).map_err(in_stage("report"))?;
            if let Some(dir) = stance {
                plots::emit_stance_plots(&dir, &out).map_err(in_stage("report"))?;
            }
        }
        Command::RunAll { .. } => {
            let outcome = pipeline::run_full_pipeline(&config)?;
            log::info!(
                "ran {:?}, skipped {:?}; manifest at {}",
                outcome.executed,
                outcome.skipped,
                outcome.manifest_path.display()
            );
            if let Some(e) = outcome.error {
                return Err(e);
            }
        }
    }
    Ok(())
}
