//! End-to-end run orchestration: prompt, complete, parse, map, write, and
//! score, with a manifest that pins everything needed to replay the run.
//!
//! Output row order always equals input row order regardless of completion
//! order, and with a fixture-backed provider two runs produce byte-identical
//! prediction files and reports. In replay mode any missing fixture aborts
//! the run with the row identified; in live mode a failed row is logged and
//! scored as an empty prediction so every input still gets an output line.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kbprobe_core::disambig::{DisambiguationMode, MappingOutcome};
use kbprobe_core::prompt::{
    build_context_followup_prompt, build_question_prompt, build_triple_prompt, select_few_shot,
    FewShotError, FewShotExample, Prompt, PromptSetting, TemplateError, TemplateSet,
};
use kbprobe_core::record::{GroundTruthRecord, QueryRecord};
use kbprobe_core::relation::{ProfileError, ProfileTable, RelationId};
use kbprobe_core::score::{overall_report, EvaluationReport, ScoreError, ScoreOn};

use crate::contextsrc::assemble_context;
use crate::dataset::{self, DatasetError};
use crate::http::{RateLimiter, RetryPolicy, RetryingTransport, UreqTransport};
use crate::llm::{
    cache_key, CachingClient, ChatCompletion, ChatRequest, LiveClient, LlmError, ReplayClient,
};
use crate::mapping::{map_objects, LmDisambiguator, MappingError};
use crate::report::{render_text_table, write_report_json, ReportError};
use crate::store::{CandidateStore, FixtureStore, PageStore, StoreError};
use crate::wikidata::{CandidateSource, LiveSearch, SnapshotSearch};
use crate::wikipedia::{ImdbTable, LivePages, PageError, PageSource, SnapshotPages};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const DETAILS_FILE: &str = "details.jsonl";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderChoice {
    Live,
    Replay,
}

impl std::str::FromStr for ProviderChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(ProviderChoice::Live),
            "replay" => Ok(ProviderChoice::Replay),
            other => Err(format!("unknown provider `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub train: PathBuf,
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model: String,
    pub setting: PromptSetting,
    pub mode: DisambiguationMode,
    pub provider: ProviderChoice,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub system_message: Option<String>,
    pub few_shot_k: usize,
    pub fixtures: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub pages: Option<PathBuf>,
    pub imdb: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub parallelism: usize,
    pub context_budget: usize,
    pub endpoint: String,
    pub search_api_url: String,
    pub wikipedia_api_url: String,
    pub profiles: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(input: PathBuf, train: PathBuf, out_dir: PathBuf) -> Self {
        RunConfig {
            input,
            train,
            truth: None,
            out_dir,
            model: "gpt-4".to_string(),
            setting: PromptSetting::Question,
            mode: DisambiguationMode::Improved,
            provider: ProviderChoice::Replay,
            temperature: 0.0,
            max_output_tokens: 512,
            system_message: None,
            few_shot_k: 3,
            fixtures: None,
            candidates: None,
            pages: None,
            imdb: None,
            cache_dir: None,
            parallelism: 4,
            context_budget: 6000,
            endpoint: crate::llm::DEFAULT_ENDPOINT.to_string(),
            search_api_url: crate::wikidata::DEFAULT_API_URL.to_string(),
            wikipedia_api_url: crate::wikipedia::DEFAULT_API_URL.to_string(),
            profiles: None,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject_qid: String,
    pub relation: RelationId,
    /// Request digests issued for this row, probe steps first, then any
    /// disambiguation selections.
    pub digests: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context_titles: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub probe_ms: u64,
    pub mapping_ms: u64,
}

/// Everything needed to reproduce the run: the full config, checksums of
/// the config assets and inputs, and every request digest issued.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RunConfig,
    pub templates_sha256: String,
    pub profiles_sha256: String,
    pub input_sha256: String,
    pub train_sha256: String,
    pub row_count: usize,
    pub rows: Vec<ManifestRow>,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("few-shot selection failed: {0}")]
    FewShot(#[from] FewShotError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("replay mode requires --fixtures")]
    MissingFixturePath,
    #[error("row {index} ({subject_qid}, {relation}) failed: {message}")]
    Row {
        index: usize,
        subject_qid: String,
        relation: RelationId,
        message: String,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub predictions_path: PathBuf,
    pub report: Option<EvaluationReport>,
    pub manifest: RunManifest,
}

/// Full detail row for audits: raw text retained verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionDetail {
    subject_label: String,
    subject_qid: String,
    relation: RelationId,
    setting: PromptSetting,
    object_labels: Vec<String>,
    object_ids: Vec<String>,
    raw_model_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_one_text: Option<String>,
    parse_failed: bool,
    mapping_outcomes: Vec<MappingOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContextRow {
    subject_qid: String,
    relation: RelationId,
    text: String,
}

struct RowOutput {
    prediction: GroundTruthRecord,
    detail: PredictionDetail,
    manifest_row: ManifestRow,
    warnings: Vec<String>,
    context_text: Option<String>,
    probe_ms: u64,
    mapping_ms: u64,
}

/// Shared per-run state handed to workers.
struct RunContext {
    config: RunConfig,
    profiles: ProfileTable,
    templates: TemplateSet,
    few_shot: std::collections::BTreeMap<RelationId, Vec<FewShotExample>>,
    llm: Arc<dyn ChatCompletion>,
    search: Arc<dyn CandidateSource>,
    pages: Arc<dyn PageSource>,
    imdb: ImdbTable,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

fn load_text_or(path: &Option<PathBuf>, builtin: &str) -> Result<String, PipelineError> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| PipelineError::Io {
            path: p.clone(),
            source,
        }),
        None => Ok(builtin.to_string()),
    }
}

type Providers = (Arc<dyn ChatCompletion>, Arc<dyn CandidateSource>, Arc<dyn PageSource>);

fn build_providers(config: &RunConfig) -> Result<Providers, PipelineError> {
    match config.provider {
        ProviderChoice::Replay => {
            let fixtures_path = config.fixtures.as_ref().ok_or(PipelineError::MissingFixturePath)?;
            let fixtures = Arc::new(Mutex::new(FixtureStore::load(fixtures_path)?));
            let llm: Arc<dyn ChatCompletion> = Arc::new(ReplayClient::new(fixtures));

            let candidate_store = match &config.candidates {
                Some(path) => CandidateStore::load(path)?,
                None => CandidateStore::in_memory(),
            };
            let search: Arc<dyn CandidateSource> = Arc::new(SnapshotSearch::new(candidate_store));

            let page_store = match &config.pages {
                Some(path) => PageStore::load(path)?,
                None => PageStore::in_memory(),
            };
            let pages: Arc<dyn PageSource> = Arc::new(SnapshotPages::new(page_store));
            Ok((llm, search, pages))
        }
        ProviderChoice::Live => {
            let cache_file = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
                explicit
                    .clone()
                    .or_else(|| config.cache_dir.as_ref().map(|d| d.join(name)))
            };

            let llm_transport = Arc::new(RetryingTransport::new(
                UreqTransport::new(),
                RetryPolicy::default(),
                RateLimiter::new(Duration::from_millis(100)),
            ));
            let live = LiveClient::from_env(llm_transport, &config.endpoint)?;
            let llm: Arc<dyn ChatCompletion> = match cache_file(&config.fixtures, "llm.jsonl") {
                Some(path) => {
                    let store = Arc::new(Mutex::new(FixtureStore::open_or_create(&path)?));
                    Arc::new(CachingClient::new(Box::new(live), store))
                }
                None => Arc::new(live),
            };

            let wikidata_transport = Arc::new(RetryingTransport::new(
                UreqTransport::new(),
                RetryPolicy::default(),
                RateLimiter::new(Duration::from_millis(200)),
            ));
            let candidate_cache = match cache_file(&config.candidates, "candidates.jsonl") {
                Some(path) => Some(CandidateStore::open_or_create(&path)?),
                None => None,
            };
            let search: Arc<dyn CandidateSource> = Arc::new(LiveSearch::new(
                wikidata_transport,
                &config.search_api_url,
                candidate_cache,
            ));

            let wikipedia_transport = Arc::new(RetryingTransport::new(
                UreqTransport::new(),
                RetryPolicy::default(),
                RateLimiter::new(Duration::from_millis(200)),
            ));
            let page_cache = match cache_file(&config.pages, "pages.jsonl") {
                Some(path) => Some(PageStore::open_or_create(&path)?),
                None => None,
            };
            let pages: Arc<dyn PageSource> = Arc::new(LivePages::new(
                wikipedia_transport,
                &config.wikipedia_api_url,
                page_cache,
            ));
            Ok((llm, search, pages))
        }
    }
}

enum RowFailure {
    /// Replay-class failure: the run must stop with the row identified.
    Abort(String),
    /// Live-class failure: log it and score the row as an empty prediction.
    Degrade(String),
}

fn classify_llm_error(provider: ProviderChoice, error: LlmError) -> RowFailure {
    match (provider, &error) {
        (ProviderChoice::Replay, _) => RowFailure::Abort(error.to_string()),
        (ProviderChoice::Live, LlmError::MissingCredential { .. }) => {
            RowFailure::Abort(error.to_string())
        }
        (ProviderChoice::Live, _) => RowFailure::Degrade(error.to_string()),
    }
}

fn classify_mapping_error(provider: ProviderChoice, error: MappingError) -> RowFailure {
    match provider {
        ProviderChoice::Replay => RowFailure::Abort(error.to_string()),
        ProviderChoice::Live => RowFailure::Degrade(error.to_string()),
    }
}

fn classify_page_error(provider: ProviderChoice, error: PageError) -> RowFailure {
    match provider {
        ProviderChoice::Replay => RowFailure::Abort(error.to_string()),
        ProviderChoice::Live => RowFailure::Degrade(error.to_string()),
    }
}

fn process_row(
    index: usize,
    record: &QueryRecord,
    ctx: &RunContext,
) -> Result<RowOutput, PipelineError> {
    let abort = |message: String| PipelineError::Row {
        index,
        subject_qid: record.subject_qid.clone(),
        relation: record.relation,
        message,
    };

    let profile = ctx.profiles.profile(record.relation);
    let examples = ctx
        .few_shot
        .get(&record.relation)
        .map(Vec::as_slice)
        .unwrap_or_default();
    let system = ctx.config.system_message.as_deref();
    let mut warnings = Vec::new();
    let mut digests = Vec::new();
    let mut context_text = None;
    let mut context_titles = Vec::new();
    let mut parse_failed = false;
    let mut step_one_text = None;

    let empty_row = |warnings: Vec<String>,
                     digests: Vec<String>,
                     raw: String,
                     step_one: Option<String>,
                     probe_ms: u64| RowOutput {
        prediction: GroundTruthRecord {
            subject_label: record.subject_label.clone(),
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            object_labels: Vec::new(),
            object_ids: Vec::new(),
        },
        detail: PredictionDetail {
            subject_label: record.subject_label.clone(),
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            setting: ctx.config.setting,
            object_labels: Vec::new(),
            object_ids: Vec::new(),
            raw_model_text: raw,
            step_one_text: step_one,
            parse_failed: false,
            mapping_outcomes: Vec::new(),
        },
        manifest_row: ManifestRow {
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            digests,
            context_titles: Vec::new(),
        },
        warnings,
        context_text: None,
        probe_ms,
        mapping_ms: 0,
    };

    let probe_started = Instant::now();
    let complete = |prompt: &Prompt, digests: &mut Vec<String>| -> Result<String, RowFailure> {
        let request = ChatRequest::from_prompt(
            prompt,
            &ctx.config.model,
            ctx.config.temperature,
            ctx.config.max_output_tokens,
        );
        digests.push(cache_key(&request));
        match ctx.llm.complete(&request) {
            Ok(response) => Ok(response.text),
            Err(e) => Err(classify_llm_error(ctx.config.provider, e)),
        }
    };

    // Knowledge probing.
    let raw = match ctx.config.setting {
        PromptSetting::Question => {
            let prompt = build_question_prompt(record, examples, &ctx.templates, system);
            match complete(&prompt, &mut digests) {
                Ok(text) => text,
                Err(RowFailure::Abort(m)) => return Err(abort(m)),
                Err(RowFailure::Degrade(m)) => {
                    warnings.push(format!("probe failed, scored empty: {m}"));
                    return Ok(empty_row(
                        warnings,
                        digests,
                        String::new(),
                        None,
                        probe_started.elapsed().as_millis() as u64,
                    ));
                }
            }
        }
        PromptSetting::Triple => {
            match build_triple_prompt(record, examples, system) {
                Ok(prompt) => match complete(&prompt, &mut digests) {
                    Ok(text) => text,
                    Err(RowFailure::Abort(m)) => return Err(abort(m)),
                    Err(RowFailure::Degrade(m)) => {
                        warnings.push(format!("probe failed, scored empty: {m}"));
                        return Ok(empty_row(
                            warnings,
                            digests,
                            String::new(),
                            None,
                            probe_started.elapsed().as_millis() as u64,
                        ));
                    }
                },
                Err(e) => {
                    // Malformed input row, not a provider failure.
                    warnings.push(format!("prompt rejected, scored empty: {e}"));
                    return Ok(empty_row(
                        warnings,
                        digests,
                        String::new(),
                        None,
                        probe_started.elapsed().as_millis() as u64,
                    ));
                }
            }
        }
        PromptSetting::Context => {
            let step_one = build_question_prompt(record, examples, &ctx.templates, system);
            let first_reply = match complete(&step_one, &mut digests) {
                Ok(text) => text,
                Err(RowFailure::Abort(m)) => return Err(abort(m)),
                Err(RowFailure::Degrade(m)) => {
                    warnings.push(format!("probe step one failed, scored empty: {m}"));
                    return Ok(empty_row(
                        warnings,
                        digests,
                        String::new(),
                        None,
                        probe_started.elapsed().as_millis() as u64,
                    ));
                }
            };
            step_one_text = Some(first_reply.clone());
            let bundle = match assemble_context(
                record,
                profile,
                ctx.pages.as_ref(),
                &ctx.imdb,
                ctx.config.context_budget,
            ) {
                Ok(bundle) => bundle,
                Err(e) => match classify_page_error(ctx.config.provider, e) {
                    RowFailure::Abort(m) => return Err(abort(m)),
                    RowFailure::Degrade(m) => {
                        warnings.push(format!("context fetch failed, continuing without: {m}"));
                        kbprobe_core::context::ContextBundle::compose(
                            "",
                            "{}",
                            None,
                            Vec::new(),
                            ctx.config.context_budget,
                        )
                    }
                },
            };
            if bundle.is_empty() {
                warnings.push(format!(
                    "empty context for {} ({})",
                    record.subject_label, record.subject_qid
                ));
            }
            context_titles = bundle.source_titles.clone();
            let followup = build_context_followup_prompt(&step_one, &bundle.rendered, &first_reply);
            context_text = Some(bundle.rendered);
            match complete(&followup, &mut digests) {
                Ok(text) => text,
                Err(RowFailure::Abort(m)) => return Err(abort(m)),
                Err(RowFailure::Degrade(m)) => {
                    warnings.push(format!("probe step two failed, scored empty: {m}"));
                    return Ok(empty_row(
                        warnings,
                        digests,
                        String::new(),
                        step_one_text,
                        probe_started.elapsed().as_millis() as u64,
                    ));
                }
            }
        }
    };
    let probe_ms = probe_started.elapsed().as_millis() as u64;

    // Output parsing. A reply with no recognizable list scores as an empty
    // prediction; the row is logged, never dropped.
    let labels = match kbprobe_core::parse::parse_object_list(&raw) {
        Ok(labels) => labels,
        Err(_) => {
            parse_failed = true;
            warnings.push(format!(
                "unparseable reply for {} ({}), scored empty",
                record.subject_label, record.subject_qid
            ));
            Vec::new()
        }
    };

    // Entity mapping.
    let mapping_started = Instant::now();
    let question_text = ctx.templates.render(record.relation, &record.subject_label);
    let lm = LmDisambiguator {
        client: ctx.llm.as_ref(),
        model: ctx.config.model.clone(),
        temperature: ctx.config.temperature,
        max_output_tokens: ctx.config.max_output_tokens,
    };
    let outcomes = match map_objects(
        &labels,
        record,
        profile,
        ctx.config.mode,
        &question_text,
        ctx.search.as_ref(),
        &lm,
        &mut digests,
    ) {
        Ok(outcomes) => outcomes,
        Err(e) => match classify_mapping_error(ctx.config.provider, e) {
            RowFailure::Abort(m) => return Err(abort(m)),
            RowFailure::Degrade(m) => {
                warnings.push(format!("mapping failed, scored empty: {m}"));
                return Ok(empty_row(warnings, digests, raw, step_one_text, probe_ms));
            }
        },
    };
    let mapping_ms = mapping_started.elapsed().as_millis() as u64;

    let object_labels: Vec<String> = outcomes.iter().map(|o| o.object_label.clone()).collect();
    let object_ids: Vec<String> = outcomes
        .iter()
        .map(|o| o.resolved_qid.clone().unwrap_or_default())
        .collect();

    Ok(RowOutput {
        prediction: GroundTruthRecord {
            subject_label: record.subject_label.clone(),
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            object_labels: object_labels.clone(),
            object_ids: object_ids.clone(),
        },
        detail: PredictionDetail {
            subject_label: record.subject_label.clone(),
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            setting: ctx.config.setting,
            object_labels,
            object_ids,
            raw_model_text: raw,
            step_one_text,
            parse_failed,
            mapping_outcomes: outcomes,
        },
        manifest_row: ManifestRow {
            subject_qid: record.subject_qid.clone(),
            relation: record.relation,
            digests,
            context_titles,
        },
        warnings,
        context_text,
        probe_ms,
        mapping_ms,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).expect("rows serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let total_started = Instant::now();

    let profiles_text = load_text_or(&config.profiles, kbprobe_core::relation::BUILTIN_PROFILES_JSON)?;
    let templates_text = load_text_or(&config.templates, kbprobe_core::prompt::BUILTIN_TEMPLATES_JSON)?;
    let profiles = ProfileTable::from_json(&profiles_text)?;
    let templates = TemplateSet::from_json(&templates_text)?;

    let queries = dataset::load_queries(&config.input)?;
    let train = dataset::load_truth(&config.train)?;

    let mut few_shot = std::collections::BTreeMap::new();
    let mut relations: Vec<RelationId> = queries.iter().map(|q| q.relation).collect();
    relations.sort();
    relations.dedup();
    for relation in relations {
        let profile = profiles.profile(relation);
        let examples = select_few_shot(
            &train,
            relation,
            config.few_shot_k,
            config.setting,
            &templates,
            profile.nullable == Some(true),
        )?;
        few_shot.insert(relation, examples);
    }

    let (llm, search, pages) = build_providers(config)?;
    let imdb = match &config.imdb {
        Some(path) => ImdbTable::load(path)?,
        None => ImdbTable::empty(),
    };

    let ctx = RunContext {
        config: config.clone(),
        profiles,
        templates,
        few_shot,
        llm,
        search,
        pages,
        imdb,
    };

    // Bounded worker pool; results land in input order by index.
    let results: Mutex<Vec<Option<Result<RowOutput, PipelineError>>>> =
        Mutex::new((0..queries.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = ctx.config.parallelism.max(1).min(queries.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= queries.len() {
                    break;
                }
                let output = process_row(index, &queries[index], &ctx);
                results.lock().expect("results poisoned")[index] = Some(output);
            });
        }
    });

    let mut outputs = Vec::with_capacity(queries.len());
    for slot in results.into_inner().expect("results poisoned") {
        outputs.push(slot.expect("every row processed")?);
    }

    std::fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Io {
        path: config.out_dir.clone(),
        source,
    })?;

    let predictions: Vec<GroundTruthRecord> =
        outputs.iter().map(|o| o.prediction.clone()).collect();
    let predictions_path = config.out_dir.join(PREDICTIONS_FILE);
    dataset::write_prediction_rows(&predictions_path, &predictions)?;

    let details: Vec<&PredictionDetail> = outputs.iter().map(|o| &o.detail).collect();
    write_jsonl(&config.out_dir.join(DETAILS_FILE), &details)?;

    if config.setting == PromptSetting::Context {
        let context_rows: Vec<ContextRow> = outputs
            .iter()
            .filter_map(|o| {
                o.context_text.as_ref().map(|text| ContextRow {
                    subject_qid: o.prediction.subject_qid.clone(),
                    relation: o.prediction.relation,
                    text: text.clone(),
                })
            })
            .collect();
        write_jsonl(&config.out_dir.join(CONTEXTS_FILE), &context_rows)?;
    }

    let mut warnings: Vec<String> = Vec::new();
    for output in &outputs {
        warnings.extend(output.warnings.iter().cloned());
    }
    for warning in &warnings {
        log::warn!("{warning}");
    }

    let report = match &config.truth {
        Some(truth_path) => {
            let truth = dataset::load_truth(truth_path)?;
            let (report, stats) = overall_report(&predictions, &truth, ScoreOn::Ids)?;
            for (qid, relation) in &stats.missing_predictions {
                warnings.push(format!("no prediction for truth row ({qid}, {relation})"));
            }
            for (qid, relation) in &stats.extra_predictions {
                warnings.push(format!("prediction ({qid}, {relation}) has no truth row"));
            }
            write_report_json(&config.out_dir.join(REPORT_JSON_FILE), &report)?;
            std::fs::write(
                config.out_dir.join(REPORT_TEXT_FILE),
                render_text_table(&report),
            )
            .map_err(|source| PipelineError::Io {
                path: config.out_dir.join(REPORT_TEXT_FILE),
                source,
            })?;
            Some(report)
        }
        None => None,
    };

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        templates_sha256: sha256_hex(templates_text.as_bytes()),
        profiles_sha256: sha256_hex(profiles_text.as_bytes()),
        input_sha256: file_sha256(&config.input)?,
        train_sha256: file_sha256(&config.train)?,
        row_count: outputs.len(),
        rows: outputs.iter().map(|o| o.manifest_row.clone()).collect(),
        timings: Timings {
            total_ms: total_started.elapsed().as_millis() as u64,
            probe_ms: outputs.iter().map(|o| o.probe_ms).sum(),
            mapping_ms: outputs.iter().map(|o| o.mapping_ms).sum(),
        },
        warnings,
    };
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(config.out_dir.join(MANIFEST_FILE), manifest_text + "\n").map_err(
        |source| PipelineError::Io {
            path: config.out_dir.join(MANIFEST_FILE),
            source,
        },
    )?;

    Ok(RunOutcome {
        out_dir: config.out_dir.clone(),
        predictions_path,
        report,
        manifest,
    })
}

/// Rehydrate a run config from a previous run's manifest.
pub fn config_from_manifest(path: &Path) -> Result<RunConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Manifest {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Manifest {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    Ok(manifest.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::HttpError;

    #[test]
    fn replay_failures_abort_live_failures_degrade() {
        let missing = LlmError::MissingFixture { digest: "abc".into() };
        assert!(matches!(
            classify_llm_error(ProviderChoice::Replay, missing),
            RowFailure::Abort(_)
        ));

        let transport = LlmError::Http(HttpError::Transport("down".into()));
        assert!(matches!(
            classify_llm_error(ProviderChoice::Live, transport),
            RowFailure::Degrade(_)
        ));

        // A missing credential is a config error, not a row-level blip.
        let credential = LlmError::MissingCredential { var: "X".into() };
        assert!(matches!(
            classify_llm_error(ProviderChoice::Live, credential),
            RowFailure::Abort(_)
        ));
    }

    #[test]
    fn replay_without_fixtures_is_rejected() {
        let config = RunConfig::new("in.jsonl".into(), "train.jsonl".into(), "out".into());
        assert!(matches!(
            build_providers(&config),
            Err(PipelineError::MissingFixturePath)
        ));
    }

    #[test]
    fn manifest_errors_carry_path() {
        let err = config_from_manifest(Path::new("/no/such/manifest.json")).unwrap_err();
        assert!(err.to_string().contains("manifest.json"));
    }
}
