//! Chat-style LLM access.
//!
//! [`LlmClient`] sits in front of a [`Backend`] and adds the response cache,
//! exchange recording for replay, and bounded concurrent dispatch. Backends:
//!
//! - [`HttpBackend`]: OpenAI-compatible chat-completions endpoint (remote or local server).
//! - [`ScriptedBackend`]: answers from a json-lines script, keyed by cache key or substring.
//! - [`ReplayBackend`]: answers from a previously recorded exchange log.
//!
//! Every call carries an `attempt` number. Parse retries of the same prompt use
//! increasing attempt numbers, so each retry has its own cache slot and its own
//! scripted/replayed answer. This keeps reruns and resumed runs deterministic.

mod cache;
mod http;
mod parse;
mod script;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy};
pub use parse::{normalize_label, parse_topic_list, TopicListAnswer};
pub use script::{ReplayBackend, ScriptEntry, ScriptedBackend};

/// Default sampling temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
/// Default completion budget.
pub const DEFAULT_MAX_TOKENS: u32 = 256;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no script entry for request {cache_key} (attempt {attempt})")]
    ScriptMiss { cache_key: String, attempt: u32 },
    #[error("could not parse a topic list from the response")]
    Parse,
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Model selection and decoding settings shared by every prompt of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RequestParams {
    fn default() -> Self {
        Self {
            model_id: "gpt-3.5-turbo".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    #[serde(rename = "model")]
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

impl LlmRequest {
    pub fn new(params: &RequestParams, messages: Vec<ChatMessage>) -> Result<Self, LlmError> {
        let req = Self {
            model_id: params.model_id.clone(),
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let last = self
            .messages
            .last()
            .ok_or_else(|| LlmError::InvalidRequest("no messages".into()))?;
        if last.role != Role::User {
            return Err(LlmError::InvalidRequest("last message must have role user".into()));
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest(format!("message {i} has empty content")));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(LlmError::InvalidRequest("temperature must be a finite value >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of model, messages and temperature, as hex.
    /// `max_tokens` is not part of the key.
    pub fn cache_key(&self) -> String {
        let material = KeyMaterial {
            model: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
        };
        let bytes = serde_json::to_vec(&material).expect("request always serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Content of the final user turn.
    pub fn last_user_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

/// One prompt/response pair; the unit of caching and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub request: LlmRequest,
    pub response_text: String,
    pub backend: String,
    pub cache_key: String,
    #[serde(default)]
    pub attempt: u32,
}

/// A source of chat completions.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn send(&self, request: &LlmRequest, attempt: u32) -> Result<String, LlmError>;

    /// Backend that originally produced the answer, for backends that relay
    /// recorded answers.
    fn origin(&self, _request: &LlmRequest, _attempt: u32) -> Option<String> {
        None
    }
}

/// Collects exchanges for the replay log, de-duplicated by `(cache_key, attempt)`.
#[derive(Debug, Default)]
pub struct ExchangeRecorder {
    entries: Mutex<BTreeMap<(String, u32), LlmExchange>>,
}

impl ExchangeRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, exchange: &LlmExchange) {
        let mut entries = self.entries.lock().unwrap();
        entries
            .entry((exchange.cache_key.clone(), exchange.attempt))
            .or_insert_with(|| exchange.clone());
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn exchanges(&self) -> Vec<LlmExchange> {
        self.entries.lock().unwrap().values().cloned().collect()
    }

    /// Loads a previously written log so a resumed run produces the same log
    /// as an uninterrupted one.
    pub fn load(&self, path: &Path) -> Result<(), LlmError> {
        if !path.exists() {
            return Ok(());
        }
        for ex in read_exchange_log(path)? {
            self.record(&ex);
        }
        Ok(())
    }

    /// Json-lines, sorted by `(cache_key, attempt)`.
    pub fn render(&self) -> String {
        let entries = self.entries.lock().unwrap();
        let mut out = String::new();
        for ex in entries.values() {
            out.push_str(&crate::artifact::to_canonical_line(ex));
            out.push('\n');
        }
        out
    }
}

pub fn read_exchange_log(path: &Path) -> Result<Vec<LlmExchange>, LlmError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                LlmError::Config(format!("{}:{}: bad exchange record: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

/// Cached, recording front end over a [`Backend`].
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    cache: Option<Arc<ResponseCache>>,
    recorder: Arc<ExchangeRecorder>,
    params: RequestParams,
    concurrency: usize,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("backend", &self.backend.name())
            .field("cached", &self.cache.is_some())
            .field("params", &self.params)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            cache: None,
            recorder: Arc::new(ExchangeRecorder::new()),
            params: RequestParams::default(),
            concurrency: 4,
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_params(mut self, params: RequestParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_recorder(mut self, recorder: Arc<ExchangeRecorder>) -> Self {
        self.recorder = recorder;
        self
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> Self {
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn params(&self) -> &RequestParams {
        &self.params
    }

    pub fn recorder(&self) -> &Arc<ExchangeRecorder> {
        &self.recorder
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn concurrency(&self) -> usize {
        self.concurrency
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> Result<LlmRequest, LlmError> {
        LlmRequest::new(&self.params, messages)
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmExchange, LlmError> {
        self.complete_attempt(request, 0)
    }

    /// Serves from cache when possible; otherwise asks the backend and stores the answer.
    pub fn complete_attempt(&self, request: &LlmRequest, attempt: u32) -> Result<LlmExchange, LlmError> {
        request.validate()?;
        let cache_key = request.cache_key();
        let cached = self.cache.as_ref().and_then(|c| c.get(&cache_key, attempt));
        let (response_text, backend) = match cached {
            Some(hit) => (hit.response, hit.backend),
            None => {
                let text = self.backend.send(request, attempt)?;
                let name = self
                    .backend
                    .origin(request, attempt)
                    .unwrap_or_else(|| self.backend.name().to_owned());
                if let Some(cache) = &self.cache {
                    cache.put(&cache_key, attempt, &name, &text)?;
                }
                (text, name)
            }
        };
        let exchange = LlmExchange {
            request: request.clone(),
            response_text,
            backend,
            cache_key,
            attempt,
        };
        self.recorder.record(&exchange);
        Ok(exchange)
    }

    /// Runs `job` over `items` with at most `concurrency` calls in flight.
    /// Results come back in input order.
    pub fn map_concurrent<T, R, F>(&self, items: &[T], job: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.concurrency) {
            if chunk.len() == 1 {
                out.push(job(&chunk[0]));
                continue;
            }
            let job = &job;
            let results: Vec<R> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|item| s.spawn(move || job(item))).collect();
                handles.into_iter().map(|h| h.join().expect("LLM worker panicked")).collect()
            });
            out.extend(results);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: AtomicUsize,
    }

    impl Backend for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn send(&self, request: &LlmRequest, attempt: u32) -> Result<String, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}#{attempt}#{n}", request.last_user_content()))
        }
    }

    fn req(text: &str) -> LlmRequest {
        LlmRequest::new(&RequestParams::default(), vec![ChatMessage::user(text)]).unwrap()
    }

    #[test]
    fn request_validation() {
        let p = RequestParams::default();
        assert!(LlmRequest::new(&p, vec![]).is_err());
        assert!(LlmRequest::new(&p, vec![ChatMessage::assistant("x")]).is_err());
        assert!(LlmRequest::new(&p, vec![ChatMessage::user("")]).is_err());
        let bad = RequestParams { temperature: -1.0, ..p.clone() };
        assert!(LlmRequest::new(&bad, vec![ChatMessage::user("x")]).is_err());
        let bad = RequestParams { max_tokens: 0, ..p };
        assert!(LlmRequest::new(&bad, vec![ChatMessage::user("x")]).is_err());
    }

    #[test]
    fn cache_key_purity() {
        let p = RequestParams::default();
        let a = LlmRequest::new(&p, vec![ChatMessage::system("s"), ChatMessage::user("u")]).unwrap();
        let same = LlmRequest::new(&p, vec![ChatMessage::system("s"), ChatMessage::user("u")]).unwrap();
        assert_eq!(a.cache_key(), same.cache_key());
        assert_eq!(a.cache_key().len(), 64);

        let permuted = LlmRequest::new(
            &p,
            vec![ChatMessage::user("u"), ChatMessage::system("s"), ChatMessage::user("u")],
        )
        .unwrap();
        assert_ne!(a.cache_key(), permuted.cache_key());

        let mut warmer = a.clone();
        warmer.temperature = 0.7;
        assert_ne!(a.cache_key(), warmer.cache_key());

        let mut longer = a.clone();
        longer.max_tokens = 1024;
        assert_eq!(a.cache_key(), longer.cache_key());
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let client = LlmClient::new(backend.clone()).with_cache(cache);
        let r = req("hello");
        let first = client.complete(&r).unwrap();
        let second = client.complete(&r).unwrap();
        assert_eq!(first.response_text, second.response_text);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);

        // a different attempt gets its own slot
        let retry = client.complete_attempt(&r, 1).unwrap();
        assert_ne!(retry.response_text, first.response_text);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);

        // cache survives reopening
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let backend2 = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let client = LlmClient::new(backend2.clone()).with_cache(cache);
        assert_eq!(client.complete(&r).unwrap().response_text, first.response_text);
        assert_eq!(backend2.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn recorder_dedupes_and_sorts() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let client = LlmClient::new(backend);
        client.complete(&req("b")).unwrap();
        client.complete(&req("a")).unwrap();
        client.complete(&req("b")).unwrap();
        assert_eq!(client.recorder().len(), 2);
        let keys: Vec<String> = client.recorder().exchanges().into_iter().map(|e| e.cache_key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn map_concurrent_preserves_order() {
        let backend = Arc::new(Counting { calls: AtomicUsize::new(0) });
        let client = LlmClient::new(backend).with_concurrency(3);
        let items: Vec<usize> = (0..10).collect();
        let out = client.map_concurrent(&items, |i| i * 2);
        assert_eq!(out, (0..10).map(|i| i * 2).collect::<Vec<_>>());
    }
}
