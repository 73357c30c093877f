use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Backend, LlmError, LlmRequest};

/// Default endpoint for a locally served model.
pub const DEFAULT_LOCAL_ENDPOINT: &str = "http://127.0.0.1:8080/v1/chat/completions";

/// Exponential backoff: the n-th retry waits `initial_backoff * multiplier^(n-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * self.multiplier.saturating_pow(retry.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Backend identity recorded in exchanges (`remote` or `local`).
    pub name: String,
    pub endpoint: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    /// Minimum spacing between consecutive requests.
    pub min_interval: Duration,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn remote(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            name: "remote".into(),
            endpoint: endpoint.into(),
            api_key,
            retry: RetryPolicy::default(),
            min_interval: Duration::ZERO,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn local(endpoint: Option<String>) -> Self {
        Self {
            name: "local".into(),
            endpoint: endpoint.unwrap_or_else(|| DEFAULT_LOCAL_ENDPOINT.into()),
            api_key: None,
            ..Self::remote("", None)
        }
    }
}

/// OpenAI-compatible chat-completions client.
///
/// Retries HTTP 429, HTTP 5xx and transport failures; other statuses fail at once.
pub struct HttpBackend {
    cfg: HttpBackendConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
    retries: AtomicU32,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        Self {
            cfg,
            agent,
            last_request: Mutex::new(None),
            retries: AtomicU32::new(0),
        }
    }

    /// Total retries performed since construction.
    pub fn retry_count(&self) -> u32 {
        self.retries.load(Ordering::SeqCst)
    }

    fn throttle(&self) {
        if self.cfg.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_request.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.cfg.min_interval {
                std::thread::sleep(self.cfg.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt_once(&self, body: &Value) -> Result<String, Failure> {
        self.throttle();
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(|e| Failure::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Failure::Transport(e.to_string()))?;
        match status {
            200..=299 => extract_content(&text).map_err(Failure::Fatal),
            429 | 500..=599 => Err(Failure::Retryable { status, body: text }),
            _ => Err(Failure::Status { status, body: text }),
        }
    }
}

enum Failure {
    Transport(String),
    Retryable { status: u16, body: String },
    Status { status: u16, body: String },
    Fatal(LlmError),
}

/// Request body: `{"model","messages":[{"role","content"}],"temperature","max_tokens"}`.
pub fn request_body(request: &LlmRequest) -> Value {
    serde_json::to_value(request).expect("request always serializes")
}

/// Reads `choices[0].message.content`.
pub fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Protocol(format!("invalid JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn send(&self, request: &LlmRequest, _attempt: u32) -> Result<String, LlmError> {
        let body = request_body(request);
        let mut retry = 0u32;
        loop {
            let failure = match self.attempt_once(&body) {
                Ok(text) => return Ok(text),
                Err(f) => f,
            };
            let attempts = retry + 1;
            let retryable = matches!(failure, Failure::Transport(_) | Failure::Retryable { .. });
            if !retryable || retry >= self.cfg.retry.max_retries {
                return Err(match failure {
                    Failure::Transport(message) => LlmError::Transport { attempts, message },
                    Failure::Retryable { status, body } | Failure::Status { status, body } => {
                        LlmError::Http { status, attempts, body }
                    }
                    Failure::Fatal(e) => e,
                });
            }
            retry += 1;
            self.retries.fetch_add(1, Ordering::SeqCst);
            let wait = self.cfg.retry.backoff(retry);
            log::warn!("{} request failed (attempt {attempts}); retrying in {wait:?}", self.cfg.name);
            std::thread::sleep(wait);
        }
    }
}
