//! Pipeline configuration file (TOML).
//!
//! Unknown keys are rejected. Relative paths resolve against the directory of
//! the config file. `PT_LLM_ENDPOINT` and `PT_LLM_API_KEY` supply the endpoint
//! and API key; `PT_CACHE_DIR` overrides `cache_dir`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::collapse::{CollapseConfig, CollapseMethod, DEFAULT_PBM_TEMPLATE};
use crate::corpus::{english_stopwords, InputFormat, PreprocessConfig};
use crate::generation::{default_demonstrations, load_demonstrations, GenerationConfig, DEFAULT_INSTRUCTION};
use crate::llm::{RequestParams, RetryPolicy, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::representation::{RepresentationConfig, DEFAULT_REFINE_TEMPLATE};

pub const ENV_ENDPOINT: &str = "PT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "PT_LLM_API_KEY";
pub const ENV_CACHE_DIR: &str = "PT_CACHE_DIR";
pub const DEFAULT_REMOTE_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Local,
    Script,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub corpus: RawCorpus,
    #[serde(default)]
    pub preprocess: RawPreprocess,
    #[serde(default)]
    pub generation: RawGeneration,
    #[serde(default)]
    pub collapse: RawCollapse,
    #[serde(default)]
    pub representation: RawRepresentation,
    #[serde(default)]
    pub evaluation: RawEvaluation,
    #[serde(default)]
    pub llm: RawLlm,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCorpus {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: InputFormat,
}

fn default_format() -> InputFormat {
    InputFormat::PlainLines
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Stopwords {
    Named(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawPreprocess {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopwords: Stopwords,
    pub lemmatize: bool,
    pub min_token_length: usize,
}

impl Default for RawPreprocess {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            stopwords: Stopwords::Named("english".into()),
            lemmatize: false,
            min_token_length: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawGeneration {
    pub n_demonstrations: usize,
    pub demonstrations_path: Option<PathBuf>,
    pub use_instruction: bool,
    pub instruction: Option<String>,
    pub max_parse_retries: u32,
    pub strict: bool,
}

impl Default for RawGeneration {
    fn default() -> Self {
        Self {
            n_demonstrations: 4,
            demonstrations_path: None,
            use_instruction: true,
            instruction: None,
            max_parse_retries: 2,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawCollapse {
    pub method: CollapseMethod,
    pub k_target: usize,
    pub g_intermediate: Option<usize>,
    pub window_size: usize,
    pub top_words_for_similarity: usize,
    pub prompt_budget_chars: usize,
    pub template: Option<String>,
}

impl Default for RawCollapse {
    fn default() -> Self {
        let c = CollapseConfig::default();
        Self {
            method: CollapseMethod::Pbm,
            k_target: c.k_target,
            g_intermediate: None,
            window_size: c.window_size,
            top_words_for_similarity: c.top_words_for_similarity,
            prompt_budget_chars: c.prompt_budget_chars,
            template: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawRepresentation {
    pub n_candidates: usize,
    pub n_words: usize,
    pub max_parse_retries: u32,
    pub template: Option<String>,
}

impl Default for RawRepresentation {
    fn default() -> Self {
        let r = RepresentationConfig::default();
        Self { n_candidates: r.n_candidates, n_words: r.n_words, max_parse_retries: r.max_parse_retries, template: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawEvaluation {
    pub npmi_window: usize,
    pub intrusion_tasks_per_topic: usize,
}

impl Default for RawEvaluation {
    fn default() -> Self {
        Self { npmi_window: 10, intrusion_tasks_per_topic: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawLlm {
    pub backend: BackendKind,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub endpoint: Option<String>,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub min_interval_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub script_path: Option<PathBuf>,
    pub replay_paths: Vec<PathBuf>,
}

impl Default for RawLlm {
    fn default() -> Self {
        Self {
            backend: BackendKind::Remote,
            model_id: RequestParams::default().model_id,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            endpoint: None,
            max_retries: 3,
            initial_backoff_ms: 1000,
            min_interval_ms: 0,
            timeout_secs: 120,
            concurrency: 4,
            script_path: None,
            replay_paths: Vec::new(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct LlmSettings {
    pub backend: BackendKind,
    pub params: RequestParams,
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub min_interval: Duration,
    pub timeout: Duration,
    pub concurrency: usize,
    pub script_path: Option<PathBuf>,
    /// Empty means every log under `<output_dir>/exchanges`.
    pub replay_paths: Vec<PathBuf>,
}

/// A parsed, defaulted and checked configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: InputFormat,
    pub preprocess: PreprocessConfig,
    pub generation: GenerationConfig,
    pub collapse_method: CollapseMethod,
    pub collapse: CollapseConfig,
    pub representation: RepresentationConfig,
    pub npmi_window: usize,
    pub intrusion_tasks_per_topic: usize,
    pub llm: LlmSettings,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
}

pub fn validate_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    load_config(path, &Overrides::default())
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| PipelineError::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(raw, &base, overrides, &|k| std::env::var(k).ok())
}

fn rel(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Applies defaults, environment and overrides, and collects every problem found.
pub fn resolve(
    raw: RawConfig,
    base: &Path,
    overrides: &Overrides,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<PipelineConfig, PipelineError> {
    let mut problems: Vec<String> = Vec::new();

    let corpus_path = rel(base, &raw.corpus.path);
    if !corpus_path.is_file() {
        problems.push(format!("corpus.path: {} does not exist", corpus_path.display()));
    }

    let p = &raw.preprocess;
    let stopword_list: BTreeSet<String> = match &p.stopwords {
        Stopwords::Named(name) if name == "english" => english_stopwords().clone(),
        Stopwords::Named(name) if name == "none" => BTreeSet::new(),
        Stopwords::Named(other) => {
            problems.push(format!("preprocess.stopwords: expected \"english\", \"none\" or a list, got \"{other}\""));
            BTreeSet::new()
        }
        Stopwords::List(words) => words.iter().map(|w| w.to_lowercase()).collect(),
    };
    let preprocess = PreprocessConfig {
        lowercase: p.lowercase,
        strip_punctuation: p.strip_punctuation,
        stopword_list,
        lemmatize: p.lemmatize,
        min_token_length: p.min_token_length,
    };
    if let Err(e) = preprocess.validate() {
        problems.push(format!("preprocess: {e}"));
    }

    let g = &raw.generation;
    let demonstrations = match &g.demonstrations_path {
        Some(dp) => {
            let dp = rel(base, dp);
            match load_demonstrations(&dp) {
                Ok(d) => d,
                Err(e) => {
                    problems.push(format!("generation.demonstrations_path: {}: {e}", dp.display()));
                    Vec::new()
                }
            }
        }
        None => default_demonstrations(),
    };
    let instruction_text = g
        .use_instruction
        .then(|| g.instruction.clone().unwrap_or_else(|| DEFAULT_INSTRUCTION.to_owned()));
    let generation = GenerationConfig {
        n_demonstrations: g.n_demonstrations,
        demonstrations,
        instruction_text,
        max_parse_retries: g.max_parse_retries,
        strict: g.strict,
    };
    if let Err(e) = generation.validate() {
        problems.push(format!("generation: {e}"));
    }

    let c = &raw.collapse;
    let collapse = CollapseConfig {
        k_target: c.k_target,
        g_intermediate: c.g_intermediate,
        window_size: c.window_size,
        top_words_for_similarity: c.top_words_for_similarity,
        prompt_budget_chars: c.prompt_budget_chars,
        pbm_template: c.template.clone().unwrap_or_else(|| DEFAULT_PBM_TEMPLATE.to_owned()),
    };
    if let Err(e) = collapse.validate() {
        problems.push(format!("collapse: {e}"));
    }
    if c.method == CollapseMethod::PbmThenWsm && c.g_intermediate.is_none() {
        problems.push("collapse: method pbm_then_wsm requires g_intermediate".to_owned());
    }

    let r = &raw.representation;
    let representation = RepresentationConfig {
        n_candidates: r.n_candidates,
        n_words: r.n_words,
        max_parse_retries: r.max_parse_retries,
        template: r.template.clone().unwrap_or_else(|| DEFAULT_REFINE_TEMPLATE.to_owned()),
    };
    if let Err(e) = representation.validate() {
        problems.push(format!("representation: {e}"));
    }

    let ev = &raw.evaluation;
    if ev.npmi_window < 2 {
        problems.push(format!("evaluation.npmi_window must be >= 2, got {}", ev.npmi_window));
    }

    let l = &raw.llm;
    let backend = overrides.backend.unwrap_or(l.backend);
    if !(0.0..=2.0).contains(&l.temperature) {
        problems.push(format!("llm.temperature must be in [0, 2], got {}", l.temperature));
    }
    if l.max_tokens == 0 {
        problems.push("llm.max_tokens must be >= 1".to_owned());
    }
    if l.concurrency == 0 {
        problems.push("llm.concurrency must be >= 1".to_owned());
    }
    if l.model_id.trim().is_empty() {
        problems.push("llm.model_id must not be empty".to_owned());
    }
    let script_path = l.script_path.as_ref().map(|sp| rel(base, sp));
    if backend == BackendKind::Script {
        match &script_path {
            None => problems.push("llm.script_path is required for the script backend".to_owned()),
            Some(sp) if !sp.is_file() => problems.push(format!("llm.script_path: {} does not exist", sp.display())),
            Some(_) => {}
        }
    }
    let replay_paths: Vec<PathBuf> = l.replay_paths.iter().map(|p| rel(base, p)).collect();
    if backend == BackendKind::Replay {
        for rp in replay_paths.iter().filter(|p| !p.is_file()) {
            problems.push(format!("llm.replay_paths: {} does not exist", rp.display()));
        }
    }
    let endpoint = env(ENV_ENDPOINT).or_else(|| l.endpoint.clone());
    let api_key = env(ENV_API_KEY);
    if backend == BackendKind::Remote && api_key.is_none() {
        problems.push(format!("the remote backend needs an API key in {ENV_API_KEY}"));
    }

    if !problems.is_empty() {
        return Err(PipelineError::Config(problems));
    }

    let output_dir = rel(base, &raw.output_dir);
    let cache_dir = match env(ENV_CACHE_DIR) {
        Some(dir) => PathBuf::from(dir),
        None => raw.cache_dir.as_ref().map(|d| rel(base, d)).unwrap_or_else(|| output_dir.join("cache")),
    };
    Ok(PipelineConfig {
        corpus_path,
        corpus_format: raw.corpus.format,
        preprocess,
        generation,
        collapse_method: c.method,
        collapse,
        representation,
        npmi_window: ev.npmi_window,
        intrusion_tasks_per_topic: ev.intrusion_tasks_per_topic,
        llm: LlmSettings {
            backend,
            params: RequestParams { model_id: l.model_id.clone(), temperature: l.temperature, max_tokens: l.max_tokens },
            endpoint,
            api_key,
            retry: RetryPolicy {
                max_retries: l.max_retries,
                initial_backoff: Duration::from_millis(l.initial_backoff_ms),
                multiplier: 2,
            },
            min_interval: Duration::from_millis(l.min_interval_ms),
            timeout: Duration::from_secs(l.timeout_secs),
            concurrency: l.concurrency,
            script_path,
            replay_paths,
        },
        cache_dir,
        output_dir,
        seed: overrides.seed.unwrap_or(raw.seed),
    })
}
