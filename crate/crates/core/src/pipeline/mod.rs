//! Stage orchestration over persisted artifacts in the output directory.
//!
//! | stage     | reads                               | writes                                     |
//! |-----------|-------------------------------------|--------------------------------------------|
//! | ingest    | corpus file                         | corpus.json                                |
//! | generate  | corpus.json                         | assignments.jsonl                          |
//! | collapse  | corpus.json, assignments.jsonl      | topics.json                                |
//! | represent | corpus.json, topics.json            | representations.json                       |
//! | evaluate  | corpus.json, representations.json   | report.json                                |
//! | intrude   | representations.json                | intrusion_sheet.json, intrusion_key.json   |
//!
//! Stages that talk to the LLM also write `exchanges/<stage>.jsonl`, which the
//! replay backend can serve from later.

mod config;
mod lock;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    load_config, resolve, validate_config, BackendKind, LlmSettings, Overrides, PipelineConfig, RawConfig,
    DEFAULT_REMOTE_ENDPOINT, ENV_API_KEY, ENV_CACHE_DIR, ENV_ENDPOINT,
};
pub use lock::{RunLock, LOCK_FILE};

use crate::artifact::{to_canonical_json, write_atomic};
use crate::collapse::{collapse_pbm, collapse_wsm, compress_to_g, compute_ctfidf, CollapseError, CollapseMethod, TopicState};
use crate::corpus::{ingest, Corpus, CorpusError};
use crate::evaluation::{
    evaluate, intrusion_sheet, make_intrusion_tasks, parse_answers, score_intrusion, EvaluationError, IntrusionTask,
    WORDS_PER_TASK,
};
use crate::generation::{generate_topics, read_assignments, render_assignments, GenerationError};
use crate::llm::{
    Backend, ExchangeRecorder, HttpBackend, HttpBackendConfig, LlmClient, LlmError, ReplayBackend, ResponseCache,
    ScriptedBackend,
};
use crate::representation::{representations_from_json, representations_to_json, represent_topics, TopicRepresentation};

pub const CORPUS_FILE: &str = "corpus.json";
pub const ASSIGNMENTS_FILE: &str = "assignments.jsonl";
pub const ASSIGNMENTS_PARTIAL_FILE: &str = "assignments.partial.jsonl";
pub const TOPICS_FILE: &str = "topics.json";
pub const REPRESENTATIONS_FILE: &str = "representations.json";
pub const REPORT_FILE: &str = "report.json";
pub const INTRUSION_SHEET_FILE: &str = "intrusion_sheet.json";
pub const INTRUSION_KEY_FILE: &str = "intrusion_key.json";
pub const INTRUSION_SCORE_FILE: &str = "intrusion_score.json";
pub const EXCHANGES_DIR: &str = "exchanges";
pub const INTRUSION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("missing upstream artifact {0}; run the stage that produces it first")]
    Dependency(String),
    #[error("LLM backend: {0}")]
    Backend(LlmError),
    #[error("{0}")]
    ParseExhausted(String),
    #[error("lock: {0}")]
    Lock(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Dependency(_) => 3,
            Self::Backend(_) => 4,
            Self::ParseExhausted(_) => 5,
            Self::Lock(_) | Self::Data(_) | Self::Io(_) => 1,
        }
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(m) => Self::Config(vec![m]),
            LlmError::Parse => Self::ParseExhausted(e.to_string()),
            LlmError::Io(io) => Self::Io(io),
            other => Self::Backend(other),
        }
    }
}

impl From<GenerationError> for PipelineError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Backend(b) => b.into(),
            GenerationError::ParseExhausted { .. } => Self::ParseExhausted(e.to_string()),
            GenerationError::Config(m) => Self::Config(vec![m]),
            GenerationError::Io(io) => Self::Io(io),
            GenerationError::Checkpoint { .. } => Self::Data(e.to_string()),
        }
    }
}

impl From<CollapseError> for PipelineError {
    fn from(e: CollapseError) -> Self {
        match e {
            CollapseError::Backend(b) => b.into(),
            CollapseError::Config(m) => Self::Config(vec![format!("collapse: {m}")]),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Config(m) => Self::Config(vec![m]),
            other => Self::Data(format!("corpus: {other}")),
        }
    }
}

impl From<EvaluationError> for PipelineError {
    fn from(e: EvaluationError) -> Self {
        Self::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Generate,
    Collapse,
    Represent,
    Evaluate,
    IntrudeMake,
    IntrudeScore { answers: PathBuf },
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Generate => "generate",
            Stage::Collapse => "collapse",
            Stage::Represent => "represent",
            Stage::Evaluate => "evaluate",
            Stage::IntrudeMake => "intrude-make",
            Stage::IntrudeScore { .. } => "intrude-score",
        }
    }

    /// The stages of `run --all`, in order.
    pub fn all() -> Vec<Stage> {
        vec![Stage::Ingest, Stage::Generate, Stage::Collapse, Stage::Represent, Stage::Evaluate, Stage::IntrudeMake]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionKey {
    pub version: u32,
    pub tasks: Vec<IntrusionTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionScore {
    pub version: u32,
    pub answered: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Runs `stages` in order while holding the output-directory lock.
/// Returns the artifacts written.
pub fn run_stages(stages: &[Stage], cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let _lock = RunLock::acquire(&cfg.output_dir)?;
    let mut written = Vec::new();
    for stage in stages {
        log::info!("stage {}", stage.name());
        written.extend(run_stage_unlocked(stage, cfg)?);
    }
    Ok(written)
}

pub fn run_stage(stage: &Stage, cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    run_stages(std::slice::from_ref(stage), cfg)
}

fn run_stage_unlocked(stage: &Stage, cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    match stage {
        Stage::Ingest => stage_ingest(cfg),
        Stage::Generate => stage_generate(cfg),
        Stage::Collapse => stage_collapse(cfg),
        Stage::Represent => stage_represent(cfg),
        Stage::Evaluate => stage_evaluate(cfg),
        Stage::IntrudeMake => stage_intrude_make(cfg),
        Stage::IntrudeScore { answers } => stage_intrude_score(cfg, answers),
    }
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn require(cfg: &PipelineConfig, name: &str) -> Result<PathBuf, PipelineError> {
    let p = out(cfg, name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(PipelineError::Dependency(p.display().to_string()))
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    Ok(fs::read_to_string(path)?)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, PipelineError> {
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus, PipelineError> {
    Ok(Corpus::from_json(&read_text(&require(cfg, CORPUS_FILE)?)?)?)
}

fn load_topics(cfg: &PipelineConfig) -> Result<TopicState, PipelineError> {
    Ok(TopicState::from_json(&read_text(&require(cfg, TOPICS_FILE)?)?)?)
}

fn load_representations(cfg: &PipelineConfig) -> Result<Vec<TopicRepresentation>, PipelineError> {
    representations_from_json(&read_text(&require(cfg, REPRESENTATIONS_FILE)?)?)
        .map_err(|e| PipelineError::Data(format!("{REPRESENTATIONS_FILE}: {e}")))
}

pub fn build_backend(cfg: &PipelineConfig) -> Result<Arc<dyn Backend>, PipelineError> {
    let l = &cfg.llm;
    let http = |mut h: HttpBackendConfig| {
        h.retry = l.retry.clone();
        h.min_interval = l.min_interval;
        h.timeout = l.timeout;
        Arc::new(HttpBackend::new(h)) as Arc<dyn Backend>
    };
    Ok(match l.backend {
        BackendKind::Remote => http(HttpBackendConfig::remote(
            l.endpoint.clone().unwrap_or_else(|| DEFAULT_REMOTE_ENDPOINT.to_owned()),
            l.api_key.clone(),
        )),
        BackendKind::Local => http(HttpBackendConfig::local(l.endpoint.clone())),
        BackendKind::Script => {
            let path = l
                .script_path
                .as_ref()
                .ok_or_else(|| PipelineError::Config(vec!["llm.script_path is required for the script backend".into()]))?;
            Arc::new(ScriptedBackend::from_path(path)?)
        }
        BackendKind::Replay => {
            let mut paths = l.replay_paths.clone();
            if paths.is_empty() {
                let dir = out(cfg, EXCHANGES_DIR);
                if dir.is_dir() {
                    for entry in fs::read_dir(&dir)? {
                        let p = entry?.path();
                        if p.extension().is_some_and(|e| e == "jsonl") {
                            paths.push(p);
                        }
                    }
                }
                paths.sort();
                if paths.is_empty() {
                    return Err(PipelineError::Dependency(format!("{}/*.jsonl", dir.display())));
                }
            }
            Arc::new(ReplayBackend::from_logs(&paths)?)
        }
    })
}

fn build_client(cfg: &PipelineConfig, recorder: Arc<ExchangeRecorder>) -> Result<LlmClient, PipelineError> {
    let cache = ResponseCache::open(&cfg.cache_dir)?;
    Ok(LlmClient::new(build_backend(cfg)?)
        .with_params(cfg.llm.params.clone())
        .with_cache(Arc::new(cache))
        .with_recorder(recorder)
        .with_concurrency(cfg.llm.concurrency))
}

fn exchange_log(cfg: &PipelineConfig, stage: &str) -> PathBuf {
    cfg.output_dir.join(EXCHANGES_DIR).join(format!("{stage}.jsonl"))
}

fn save_exchanges(cfg: &PipelineConfig, stage: &str, recorder: &ExchangeRecorder) -> Result<PathBuf, PipelineError> {
    let path = exchange_log(cfg, stage);
    fs::create_dir_all(path.parent().expect("log path has a parent"))?;
    write(path, &recorder.render())
}

/// Runs `body` with a recording client and saves the exchange log whether or not it succeeds.
fn with_llm<T>(
    cfg: &PipelineConfig,
    stage: &str,
    recorder: Arc<ExchangeRecorder>,
    body: impl FnOnce(&LlmClient) -> Result<T, PipelineError>,
) -> Result<(T, PathBuf), PipelineError> {
    let client = build_client(cfg, recorder.clone())?;
    let result = body(&client);
    let log = save_exchanges(cfg, stage, &recorder)?;
    result.map(|r| (r, log))
}

fn stage_ingest(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    if !cfg.corpus_path.is_file() {
        return Err(PipelineError::Dependency(cfg.corpus_path.display().to_string()));
    }
    let corpus = ingest(&cfg.corpus_path, cfg.corpus_format, &cfg.preprocess)?;
    log::info!("ingested {} documents, {} distinct tokens", corpus.len(), corpus.vocabulary.len());
    Ok(vec![write(out(cfg, CORPUS_FILE), &corpus.to_json())?])
}

fn stage_generate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let corpus = load_corpus(cfg)?;
    let partial = out(cfg, ASSIGNMENTS_PARTIAL_FILE);
    let recorder = Arc::new(ExchangeRecorder::new());
    let log_path = exchange_log(cfg, "generate");
    // Resuming: keep the exchanges of documents that are already checkpointed.
    if partial.exists() && log_path.is_file() {
        recorder.load(&log_path)?;
    }
    let (assignments, log) = with_llm(cfg, "generate", recorder, |client| {
        Ok(generate_topics(&corpus, &cfg.generation, client, Some(&partial))?)
    })?;
    let final_path = write(out(cfg, ASSIGNMENTS_FILE), &render_assignments(&assignments))?;
    fs::remove_file(&partial)?;
    Ok(vec![final_path, log])
}

fn stage_collapse(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let corpus = load_corpus(cfg)?;
    let assignments = read_assignments(&require(cfg, ASSIGNMENTS_FILE)?)?;
    if let Some(a) = assignments.iter().find(|a| a.doc_id >= corpus.len()) {
        return Err(PipelineError::Data(format!("assignment for unknown document {}", a.doc_id)));
    }
    let initial = TopicState::from_assignments(&assignments);
    log::info!("collapsing {} topics to {}", initial.len(), cfg.collapse.k_target);
    let recorder = Arc::new(ExchangeRecorder::new());
    let (state, log) = with_llm(cfg, "collapse", recorder, |client| {
        Ok(match cfg.collapse_method {
            CollapseMethod::Pbm => collapse_pbm(&initial, &cfg.collapse, client)?,
            CollapseMethod::Wsm => collapse_wsm(&initial, &corpus, &cfg.collapse)?,
            CollapseMethod::PbmThenWsm => {
                let compressed = compress_to_g(&initial, &cfg.collapse, client)?;
                collapse_wsm(&compressed, &corpus, &cfg.collapse)?
            }
        })
    })?;
    Ok(vec![write(out(cfg, TOPICS_FILE), &state.to_json())?, log])
}

fn stage_represent(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let corpus = load_corpus(cfg)?;
    let state = load_topics(cfg)?;
    let model = compute_ctfidf(&state, &corpus)?;
    let recorder = Arc::new(ExchangeRecorder::new());
    let (reps, log) = with_llm(cfg, "represent", recorder, |client| {
        Ok(represent_topics(&model, &cfg.representation, client)?)
    })?;
    Ok(vec![write(out(cfg, REPRESENTATIONS_FILE), &representations_to_json(&reps))?, log])
}

fn stage_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let corpus = load_corpus(cfg)?;
    let reps = load_representations(cfg)?;
    let report = evaluate(&corpus, &reps, cfg.npmi_window)?;
    log::info!("mean NPMI {:.4}, topic diversity {:.4}", report.mean_npmi, report.topic_diversity);
    Ok(vec![write(out(cfg, REPORT_FILE), &to_canonical_json(&report))?])
}

fn stage_intrude_make(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let reps = load_representations(cfg)?;
    let usable: Vec<TopicRepresentation> = reps
        .into_iter()
        .filter(|r| {
            let ok = r.words.len() >= WORDS_PER_TASK - 1;
            if !ok {
                log::warn!("topic '{}' has too few words for intrusion tasks", r.label);
            }
            ok
        })
        .collect();
    let tasks = make_intrusion_tasks(&usable, cfg.intrusion_tasks_per_topic, cfg.seed)?;
    let sheet = write(out(cfg, INTRUSION_SHEET_FILE), &to_canonical_json(&intrusion_sheet(&tasks)))?;
    let key = IntrusionKey { version: INTRUSION_VERSION, tasks };
    let key = write(out(cfg, INTRUSION_KEY_FILE), &to_canonical_json(&key))?;
    Ok(vec![sheet, key])
}

fn stage_intrude_score(cfg: &PipelineConfig, answers: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let key: IntrusionKey = serde_json::from_str(&read_text(&require(cfg, INTRUSION_KEY_FILE)?)?)
        .map_err(|e| PipelineError::Data(format!("{INTRUSION_KEY_FILE}: {e}")))?;
    if !answers.is_file() {
        return Err(PipelineError::Dependency(answers.display().to_string()));
    }
    let answers = parse_answers(&read_text(answers)?)?;
    let accuracy = score_intrusion(&key.tasks, &answers)?;
    let correct = (accuracy * answers.len() as f64).round() as usize;
    let score = IntrusionScore { version: INTRUSION_VERSION, answered: answers.len(), correct, accuracy };
    log::info!("intrusion accuracy {accuracy:.4} over {} answers", answers.len());
    Ok(vec![write(out(cfg, INTRUSION_SCORE_FILE), &to_canonical_json(&score))?])
}
