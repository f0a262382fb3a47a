//! Command-line interface: `run`, `evaluate`, `audit`, `compare`, and
//! `record-fixtures`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use kbprobe_core::disambig::DisambiguationMode;
use kbprobe_core::gap::GapThresholds;
use kbprobe_core::prompt::PromptSetting;
use kbprobe_core::relation::ProfileTable;
use kbprobe_core::score::{overall_report, ScoreOn};

use crate::audit::{load_contexts, run_audit};
use crate::dataset;
use crate::http::{RateLimiter, RetryPolicy, RetryingTransport, UreqTransport};
use crate::pipeline::{self, ProviderChoice, RunConfig};
use crate::report::{read_report_json, render_compare_table, render_text_table, write_report_json};
use crate::sparql::{LiveSparql, PidTable, SnapshotTruth, TruthSource};
use crate::store::SparqlStore;

#[derive(Parser)]
#[command(name = "kbprobe", version, about = "Probe chat models for Wikidata relation objects, link them to QIDs, and score the result")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the probing pipeline over an input split.
    Run(RunArgs),
    /// Score a prediction file against ground truth.
    Evaluate(EvaluateArgs),
    /// Diff predictions against live or snapshot Wikidata truth.
    Audit(AuditArgs),
    /// Compare two report.json files relation by relation.
    Compare(CompareArgs),
    /// Run live and record every response into a fixture file.
    RecordFixtures(RecordArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input query split (JSONL).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Train split used for few-shot examples (JSONL).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Ground truth for the input split; enables the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory for all run artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replay a previous run's manifest (flags below still override).
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[arg(long, default_value = "gpt-4")]
    model: String,
    /// question, triple, or context.
    #[arg(long, default_value = "question")]
    setting: PromptSetting,
    /// baseline or improved.
    #[arg(long, default_value = "improved")]
    disambiguation: DisambiguationMode,
    /// live or replay.
    #[arg(long, default_value = "replay")]
    provider: ProviderChoice,
    /// Recorded chat replies (required for replay, cache target for live).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Recorded candidate searches.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Recorded page intros and infoboxes.
    #[arg(long)]
    pages: Option<PathBuf>,
    /// IMDb episode-count table (JSONL of subject_qid/episode_count).
    #[arg(long)]
    imdb: Option<PathBuf>,
    /// Directory for live-mode caches when no explicit store paths are set.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Character budget for assembled context.
    #[arg(long, default_value_t = 6000)]
    context_budget: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 512)]
    max_output_tokens: u32,
    /// Optional system message prepended to every prompt.
    #[arg(long)]
    system_message: Option<String>,
    #[arg(long, default_value_t = 3)]
    few_shot: usize,
    /// Chat completions endpoint for live runs.
    #[arg(long, default_value = crate::llm::DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Override the relation profile table (JSON).
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Override the prompt template table (JSON).
    #[arg(long)]
    templates: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self, forced_provider: Option<ProviderChoice>) -> Result<RunConfig, String> {
        let mut config = match &self.from_manifest {
            Some(path) => pipeline::config_from_manifest(path).map_err(|e| e.to_string())?,
            None => {
                let input = self.input.clone().ok_or("--input is required")?;
                let train = self.train.clone().ok_or("--train is required")?;
                let out_dir = self.out_dir.clone().ok_or("--out-dir is required")?;
                RunConfig::new(input, train, out_dir)
            }
        };
        if self.from_manifest.is_some() {
            if let Some(input) = self.input {
                config.input = input;
            }
            if let Some(train) = self.train {
                config.train = train;
            }
            if let Some(out_dir) = self.out_dir {
                config.out_dir = out_dir;
            }
        } else {
            config.model = self.model;
            config.setting = self.setting;
            config.mode = self.disambiguation;
            config.provider = self.provider;
            config.temperature = self.temperature;
            config.max_output_tokens = self.max_output_tokens;
            config.system_message = self.system_message;
            config.few_shot_k = self.few_shot;
            config.parallelism = self.parallelism;
            config.context_budget = self.context_budget;
            config.endpoint = self.endpoint;
        }
        if self.truth.is_some() {
            config.truth = self.truth;
        }
        if self.fixtures.is_some() {
            config.fixtures = self.fixtures;
        }
        if self.candidates.is_some() {
            config.candidates = self.candidates;
        }
        if self.pages.is_some() {
            config.pages = self.pages;
        }
        if self.imdb.is_some() {
            config.imdb = self.imdb;
        }
        if self.cache_dir.is_some() {
            config.cache_dir = self.cache_dir;
        }
        if self.profiles.is_some() {
            config.profiles = self.profiles;
        }
        if self.templates.is_some() {
            config.templates = self.templates;
        }
        if let Some(provider) = forced_provider {
            config.provider = provider;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Write the JSON report here as well as printing the table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// ids (headline) or labels (knowledge-vs-linking debugging).
    #[arg(long, default_value = "ids")]
    on: ScoreOn,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Snapshot of Wikidata truth (JSONL); omit to query live.
    #[arg(long)]
    truth_snapshot: Option<PathBuf>,
    /// contexts.jsonl from a context-setting run, for corroboration.
    #[arg(long)]
    contexts: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the relation-to-property table (JSON).
    #[arg(long)]
    pids: Option<PathBuf>,
    /// Cache file for live SPARQL results.
    #[arg(long)]
    sparql_cache: Option<PathBuf>,
    #[arg(long, default_value = crate::sparql::DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Divergence below this is aligned.
    #[arg(long, default_value_t = 0.25)]
    aligned_threshold: f64,
    /// Divergence at or above this (corroborated) is a KB gap candidate.
    #[arg(long, default_value_t = 0.75)]
    gap_threshold: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// Left report.json (e.g. the baseline run).
    left: PathBuf,
    /// Right report.json (e.g. the improved run).
    right: PathBuf,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    run: RunArgs,
}

pub fn execute() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let config = args.into_config(None)?;
            let outcome = pipeline::run(&config).map_err(|e| e.to_string())?;
            println!("predictions: {}", outcome.predictions_path.display());
            if let Some(report) = &outcome.report {
                println!("{}", render_text_table(report));
            }
            println!("manifest: {}", outcome.out_dir.join(pipeline::MANIFEST_FILE).display());
            Ok(())
        }
        Command::RecordFixtures(args) => {
            if args.run.fixtures.is_none() {
                return Err("--fixtures is required to record".to_string());
            }
            let config = args.run.into_config(Some(ProviderChoice::Live))?;
            let outcome = pipeline::run(&config).map_err(|e| e.to_string())?;
            println!(
                "recorded {} rows; fixtures at {}",
                outcome.manifest.row_count,
                config.fixtures.as_ref().expect("checked above").display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let predictions =
                dataset::load_prediction_rows(&args.predictions).map_err(|e| e.to_string())?;
            let truth = dataset::load_truth(&args.truth).map_err(|e| e.to_string())?;
            let (report, stats) =
                overall_report(&predictions, &truth, args.on).map_err(|e| e.to_string())?;
            for (qid, relation) in &stats.missing_predictions {
                log::warn!("no prediction for truth row ({qid}, {relation})");
            }
            for (qid, relation) in &stats.extra_predictions {
                log::warn!("prediction ({qid}, {relation}) has no truth row");
            }
            print!("{}", render_text_table(&report));
            if let Some(out) = &args.out {
                write_report_json(out, &report).map_err(|e| e.to_string())?;
                println!("report: {}", out.display());
            }
            Ok(())
        }
        Command::Audit(args) => {
            let pids = match &args.pids {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                    PidTable::from_json(&text).map_err(|e| e.to_string())?
                }
                None => PidTable::builtin(),
            };
            pids.validate_against(&ProfileTable::builtin())
                .map_err(|e| e.to_string())?;
            let auditable = {
                let pids = pids.clone();
                move |relation| pids.pid(relation).is_ok()
            };
            let truth: Box<dyn TruthSource> = match &args.truth_snapshot {
                Some(path) => {
                    Box::new(SnapshotTruth::new(SparqlStore::load(path).map_err(|e| e.to_string())?))
                }
                None => {
                    let transport = Arc::new(RetryingTransport::new(
                        UreqTransport::new(),
                        RetryPolicy::default(),
                        RateLimiter::new(Duration::from_millis(500)),
                    ));
                    let cache = match &args.sparql_cache {
                        Some(path) => {
                            Some(SparqlStore::open_or_create(path).map_err(|e| e.to_string())?)
                        }
                        None => None,
                    };
                    Box::new(LiveSparql::new(transport, &args.endpoint, pids, cache))
                }
            };
            let contexts = match &args.contexts {
                Some(path) => load_contexts(path).map_err(|e| e.to_string())?,
                None => Default::default(),
            };
            let thresholds = GapThresholds {
                aligned_below: args.aligned_threshold,
                kb_gap_at_least: args.gap_threshold,
            };
            let outcome = run_audit(
                &args.predictions,
                truth.as_ref(),
                auditable,
                &contexts,
                &thresholds,
                &args.out_dir,
            )
            .map_err(|e| e.to_string())?;
            println!(
                "{} findings: {} aligned, {} model gaps, {} kb gap candidates ({} relations skipped)",
                outcome.findings.len(),
                outcome.aligned,
                outcome.model_gaps,
                outcome.kb_gap_candidates,
                outcome.skipped_relations.len()
            );
            println!(
                "ranked findings: {}",
                args.out_dir.join(crate::audit::FINDINGS_TEXT_FILE).display()
            );
            Ok(())
        }
        Command::Compare(args) => {
            let left = read_report_json(&args.left).map_err(|e| e.to_string())?;
            let right = read_report_json(&args.right).map_err(|e| e.to_string())?;
            let left_name = args.left.file_stem().and_then(|s| s.to_str()).unwrap_or("left");
            let right_name = args.right.file_stem().and_then(|s| s.to_str()).unwrap_or("right");
            let table = render_compare_table(&left, &right, left_name, right_name)
                .map_err(|e| e.to_string())?;
            print!("{table}");
            Ok(())
        }
    }
}
