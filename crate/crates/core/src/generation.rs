//! Per-document topic generation with few-shot chat prompts.
//!
//! A prompt is an optional system instruction, `n_demonstrations` user/assistant
//! example turns, and the target document as the final user turn.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collapse::TopicState;
use crate::corpus::{Corpus, Document};
use crate::llm::{parse_topic_list, ChatMessage, LlmClient, LlmError, LlmRequest, RequestParams};

/// Catch-all label, shared with the collapse stage.
pub const MISCELLANEOUS: &str = "miscellaneous";

pub const DEFAULT_INSTRUCTION: &str = "You will receive a document. Identify the main topics it discusses. \
Answer only with a short comma-separated list of topic labels, most important first.";

pub const ACCEPTED_DEMONSTRATION_COUNTS: [usize; 4] = [2, 4, 6, 8];

static DEFAULT_DEMONSTRATIONS: &str = include_str!("../data/demonstrations.json");

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("document {doc_id}: no parseable topic list after {attempts} attempt(s)")]
    ParseExhausted { doc_id: usize, attempts: u32 },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    #[serde(rename = "text")]
    pub input_text: String,
    #[serde(rename = "labels")]
    pub answer_labels: Vec<String>,
}

/// The eight domain-neutral demonstrations shipped with the crate.
pub fn default_demonstrations() -> Vec<Demonstration> {
    serde_json::from_str(DEFAULT_DEMONSTRATIONS).expect("bundled demonstrations are valid JSON")
}

/// Reads a demonstration file: a JSON list of `{"text", "labels"}`.
pub fn load_demonstrations(path: &Path) -> Result<Vec<Demonstration>, GenerationError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GenerationError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_demonstrations: usize,
    pub demonstrations: Vec<Demonstration>,
    /// `None` for models that are not instruction-tuned.
    pub instruction_text: Option<String>,
    pub max_parse_retries: u32,
    /// Fail with [`GenerationError::ParseExhausted`] instead of falling back to
    /// the miscellaneous label.
    #[serde(default)]
    pub strict: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_demonstrations: 4,
            demonstrations: default_demonstrations(),
            instruction_text: Some(DEFAULT_INSTRUCTION.to_owned()),
            max_parse_retries: 2,
            strict: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !ACCEPTED_DEMONSTRATION_COUNTS.contains(&self.n_demonstrations) {
            return Err(GenerationError::Config(format!(
                "n_demonstrations must be one of {ACCEPTED_DEMONSTRATION_COUNTS:?}, got {}",
                self.n_demonstrations
            )));
        }
        if self.n_demonstrations > self.demonstrations.len() {
            return Err(GenerationError::Config(format!(
                "n_demonstrations = {} but only {} demonstrations are available",
                self.n_demonstrations,
                self.demonstrations.len()
            )));
        }
        if let Some(i) = self.demonstrations.iter().position(|d| d.answer_labels.is_empty()) {
            return Err(GenerationError::Config(format!("demonstration {i} has no answer labels")));
        }
        if let Some(i) = self.demonstrations.iter().position(|d| d.input_text.trim().is_empty()) {
            return Err(GenerationError::Config(format!("demonstration {i} has empty text")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAssignment {
    pub doc_id: usize,
    pub labels: Vec<String>,
}

pub fn build_generation_prompt(
    doc: &Document,
    cfg: &GenerationConfig,
    params: &RequestParams,
) -> Result<LlmRequest, LlmError> {
    let mut messages = Vec::with_capacity(2 * cfg.n_demonstrations + 2);
    if let Some(instruction) = cfg.instruction_text.as_deref().filter(|s| !s.is_empty()) {
        messages.push(ChatMessage::system(instruction));
    }
    for demo in cfg.demonstrations.iter().take(cfg.n_demonstrations) {
        messages.push(ChatMessage::user(demo.input_text.clone()));
        messages.push(ChatMessage::assistant(demo.answer_labels.join(", ")));
    }
    messages.push(ChatMessage::user(doc.text()));
    LlmRequest::new(params, messages)
}

fn generate_one(
    doc: &Document,
    cfg: &GenerationConfig,
    client: &LlmClient,
) -> Result<TopicAssignment, GenerationError> {
    if doc.tokens.is_empty() {
        return Ok(TopicAssignment { doc_id: doc.id, labels: vec![MISCELLANEOUS.to_owned()] });
    }
    let request = build_generation_prompt(doc, cfg, client.params())?;
    for attempt in 0..=cfg.max_parse_retries {
        let exchange = client.complete_attempt(&request, attempt)?;
        match parse_topic_list(&exchange.response_text) {
            Ok(answer) => return Ok(TopicAssignment { doc_id: doc.id, labels: answer.labels }),
            Err(_) => log::debug!("doc {}: unparseable answer on attempt {attempt}", doc.id),
        }
    }
    if cfg.strict {
        return Err(GenerationError::ParseExhausted {
            doc_id: doc.id,
            attempts: cfg.max_parse_retries + 1,
        });
    }
    log::warn!("doc {}: falling back to '{MISCELLANEOUS}'", doc.id);
    Ok(TopicAssignment { doc_id: doc.id, labels: vec![MISCELLANEOUS.to_owned()] })
}

/// Generates topics for every document, in document order.
///
/// With a checkpoint path, finished assignments are appended to it as they are
/// committed, and assignments already present there are not regenerated.
pub fn generate_topics(
    corpus: &Corpus,
    cfg: &GenerationConfig,
    client: &LlmClient,
    checkpoint: Option<&Path>,
) -> Result<Vec<TopicAssignment>, GenerationError> {
    cfg.validate()?;
    let mut done = match checkpoint {
        Some(p) if p.exists() => read_checkpoint(p, corpus)?,
        _ => Vec::new(),
    };
    if !done.is_empty() {
        log::info!("resuming generation after {} checkpointed documents", done.len());
    }
    let mut sink = match checkpoint {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Some(OpenOptions::new().create(true).append(true).open(p)?)
        }
        None => None,
    };

    let remaining = &corpus.documents[done.len()..];
    for batch in remaining.chunks(client.concurrency() * 4) {
        let results = client.map_concurrent(batch, |doc| generate_one(doc, cfg, client));
        for result in results {
            let assignment = result?;
            if let Some(f) = sink.as_mut() {
                let mut line = crate::artifact::to_canonical_line(&assignment);
                line.push('\n');
                f.write_all(line.as_bytes())?;
                f.flush()?;
            }
            done.push(assignment);
        }
    }
    Ok(done)
}

fn read_checkpoint(path: &Path, corpus: &Corpus) -> Result<Vec<TopicAssignment>, GenerationError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        // A torn final line means that assignment was never committed.
        let Ok(a) = serde_json::from_str::<TopicAssignment>(line) else {
            break;
        };
        if a.doc_id != out.len() || a.doc_id >= corpus.len() {
            return Err(GenerationError::Checkpoint {
                path: path.display().to_string(),
                message: format!("expected doc_id {}, found {}", out.len(), a.doc_id),
            });
        }
        out.push(a);
    }
    // Rewrite so appends start on a clean line.
    let mut clean = String::new();
    for a in &out {
        clean.push_str(&crate::artifact::to_canonical_line(a));
        clean.push('\n');
    }
    crate::artifact::write_atomic(path, clean.as_bytes())?;
    Ok(out)
}

/// Json-lines rendering of the generation stage artifact.
pub fn render_assignments(assignments: &[TopicAssignment]) -> String {
    let mut out = String::new();
    for a in assignments {
        out.push_str(&crate::artifact::to_canonical_line(a));
        out.push('\n');
    }
    out
}

pub fn read_assignments(path: &Path) -> Result<Vec<TopicAssignment>, GenerationError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GenerationError::Checkpoint {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Counts, per label, the documents whose assignment contains it.
pub fn tally_topics(assignments: &[TopicAssignment]) -> TopicState {
    TopicState::from_assignments(assignments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreprocessConfig;
    use crate::llm::{Role, ScriptEntry, ScriptedBackend};
    use std::sync::Arc;

    fn doc(text: &str) -> Document {
        Document {
            id: 0,
            raw_text: text.into(),
            tokens: text.split_whitespace().map(String::from).collect(),
            label: None,
        }
    }

    #[test]
    fn prompt_layout_with_and_without_instruction() {
        let d = doc("trailer talk week movie rite mechanic week opportunity");
        let params = RequestParams::default();
        let cfg = GenerationConfig::default();
        let req = build_generation_prompt(&d, &cfg, &params).unwrap();
        // system + 4 demo pairs + target
        assert_eq!(req.messages.len(), 10);
        assert_eq!(req.messages[0].role, Role::System);
        let roles: Vec<Role> = req.messages[1..9].iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::User, Role::Assistant].repeat(4));
        assert_eq!(req.messages[9].content, d.text());

        let llama = GenerationConfig { instruction_text: None, ..cfg.clone() };
        let req = build_generation_prompt(&d, &llama, &params).unwrap();
        assert_eq!(req.messages.len(), 9);
        assert!(req.messages.iter().all(|m| m.role != Role::System));

        let zero = GenerationConfig { n_demonstrations: 0, instruction_text: None, ..cfg };
        let req = build_generation_prompt(&d, &zero, &params).unwrap();
        assert_eq!(req.messages.len(), 1);
        assert_eq!(req.messages[0].role, Role::User);
    }

    #[test]
    fn config_checks_demo_count() {
        for n in [0, 3, 9, 10] {
            let cfg = GenerationConfig { n_demonstrations: n, ..GenerationConfig::default() };
            assert!(cfg.validate().is_err(), "{n}");
        }
        let short = GenerationConfig {
            n_demonstrations: 8,
            demonstrations: default_demonstrations()[..6].to_vec(),
            ..GenerationConfig::default()
        };
        assert!(short.validate().is_err());
        for n in [2, 4, 6, 8] {
            let cfg = GenerationConfig { n_demonstrations: n, ..GenerationConfig::default() };
            assert!(cfg.validate().is_ok());
        }
    }

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::from_texts("t", texts, &PreprocessConfig::default()).unwrap()
    }

    #[test]
    fn scripted_generation_and_retry() {
        let c = corpus(&["trailer talk week movie rite mechanic week opportunity", "hockey game tonight"]);
        let cfg = GenerationConfig { max_parse_retries: 1, ..GenerationConfig::default() };
        let params = RequestParams::default();
        let k0 = build_generation_prompt(&c.documents[0], &cfg, &params).unwrap().cache_key();
        let k1 = build_generation_prompt(&c.documents[1], &cfg, &params).unwrap().cache_key();
        let backend = ScriptedBackend::from_entries([
            ScriptEntry::keyed(k0, "movies, trailers, mechanic"),
            ScriptEntry::keyed(k1.clone(), ""),
            ScriptEntry::keyed(k1, "sports"),
        ]);
        let client = LlmClient::new(Arc::new(backend));
        let out = generate_topics(&c, &cfg, &client, None).unwrap();
        assert_eq!(out[0].labels, ["movies", "trailers", "mechanic"]);
        assert_eq!(out[1].labels, ["sports"]);
    }

    #[test]
    fn exhausted_retries_fall_back() {
        let c = corpus(&["some text"]);
        let backend = ScriptedBackend::from_entries([ScriptEntry::pattern("some", "  ,  ")]);
        let client = LlmClient::new(Arc::new(backend));
        let cfg = GenerationConfig::default();
        let out = generate_topics(&c, &cfg, &client, None).unwrap();
        assert_eq!(out[0].labels, [MISCELLANEOUS]);

        let strict = GenerationConfig { strict: true, ..cfg };
        assert!(matches!(
            generate_topics(&c, &strict, &client, None),
            Err(GenerationError::ParseExhausted { doc_id: 0, attempts: 3 })
        ));
    }

    #[test]
    fn five_documents_in_order() {
        let texts = ["alpha one", "beta two", "gamma three", "delta four", "epsilon five"];
        let c = corpus(&texts);
        let entries: Vec<ScriptEntry> = ["alpha", "beta", "gamma", "delta", "epsilon"]
            .iter()
            .map(|w| ScriptEntry::pattern(*w, format!("topic {w}")))
            .collect();
        let client = LlmClient::new(Arc::new(ScriptedBackend::from_entries(entries))).with_concurrency(3);
        let out = generate_topics(&c, &GenerationConfig::default(), &client, None).unwrap();
        let ids: Vec<usize> = out.iter().map(|a| a.doc_id).collect();
        assert_eq!(ids, [0, 1, 2, 3, 4]);
        for (a, w) in out.iter().zip(["alpha", "beta", "gamma", "delta", "epsilon"]) {
            assert_eq!(a.labels, [format!("topic {w}")]);
        }
    }

    #[test]
    fn backend_error_leaves_resumable_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("assignments.partial.jsonl");
        let c = corpus(&["aa", "bb", "cc", "dd"]);
        let partial = ScriptedBackend::from_entries([
            ScriptEntry::pattern("aa", "x"),
            ScriptEntry::pattern("bb", "y"),
        ]);
        let client = LlmClient::new(Arc::new(partial)).with_concurrency(1);
        let err = generate_topics(&c, &GenerationConfig::default(), &client, Some(&ckpt)).unwrap_err();
        assert!(matches!(err, GenerationError::Backend(LlmError::ScriptMiss { .. })));
        assert_eq!(read_assignments(&ckpt).unwrap().len(), 2);

        // The resumed backend no longer knows the first two documents.
        let rest = ScriptedBackend::from_entries([
            ScriptEntry::pattern("cc", "z"),
            ScriptEntry::pattern("dd", "w"),
        ]);
        let client = LlmClient::new(Arc::new(rest));
        let out = generate_topics(&c, &GenerationConfig::default(), &client, Some(&ckpt)).unwrap();
        let labels: Vec<&str> = out.iter().map(|a| a.labels[0].as_str()).collect();
        assert_eq!(labels, ["x", "y", "z", "w"]);
    }

    #[test]
    fn tally_counts_documents() {
        let state = tally_topics(&[
            TopicAssignment { doc_id: 0, labels: vec!["a".into(), "b".into()] },
            TopicAssignment { doc_id: 1, labels: vec!["a".into()] },
        ]);
        assert_eq!(state.frequency["a"], 2);
        assert_eq!(state.frequency["b"], 1);
        assert_eq!(state.topics["a"].iter().copied().collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn tally_counts_repeated_label_once_per_document() {
        let state = tally_topics(&[TopicAssignment { doc_id: 3, labels: vec!["a".into(), "a".into()] }]);
        assert_eq!(state.frequency["a"], 1);
    }

    #[test]
    fn bundled_demonstrations() {
        let demos = default_demonstrations();
        assert_eq!(demos.len(), 8);
        assert!(demos.iter().all(|d| !d.answer_labels.is_empty()));
    }
}
