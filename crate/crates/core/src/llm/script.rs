use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_exchange_log, Backend, LlmError, LlmExchange, LlmRequest};

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    /// Answers the request whose cache key equals `cache_key`.
    Keyed { cache_key: String, response: String },
    /// Answers any request whose final user turn contains `match_substring`.
    Pattern { match_substring: String, response: String },
}

impl ScriptEntry {
    pub fn keyed(cache_key: impl Into<String>, response: impl Into<String>) -> Self {
        Self::Keyed { cache_key: cache_key.into(), response: response.into() }
    }

    pub fn pattern(substring: impl Into<String>, response: impl Into<String>) -> Self {
        Self::Pattern { match_substring: substring.into(), response: response.into() }
    }
}

/// Deterministic backend driven by a script.
///
/// Keyed entries are consulted first, then pattern entries in file order.
/// When several entries match, attempt `n` gets the `n`-th of them (the last
/// one repeats), which lets a script answer a parse retry differently.
/// A request nothing matches is a [`LlmError::ScriptMiss`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    keyed: HashMap<String, Vec<String>>,
    patterns: Vec<(String, String)>,
}

impl ScriptedBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut backend = Self::default();
        for entry in entries {
            match entry {
                ScriptEntry::Keyed { cache_key, response } => {
                    backend.keyed.entry(cache_key).or_default().push(response)
                }
                ScriptEntry::Pattern { match_substring, response } => {
                    backend.patterns.push((match_substring, response))
                }
            }
        }
        backend
    }

    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| {
                LlmError::Config(format!("{}:{}: bad script entry: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.keyed.values().map(Vec::len).sum::<usize>() + self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn pick(candidates: &[&str], attempt: u32) -> Option<String> {
    let last = candidates.len().checked_sub(1)?;
    Some(candidates[(attempt as usize).min(last)].to_owned())
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "script"
    }

    fn send(&self, request: &LlmRequest, attempt: u32) -> Result<String, LlmError> {
        let key = request.cache_key();
        if let Some(responses) = self.keyed.get(&key) {
            let refs: Vec<&str> = responses.iter().map(String::as_str).collect();
            if let Some(r) = pick(&refs, attempt) {
                return Ok(r);
            }
        }
        let content = request.last_user_content();
        let matching: Vec<&str> = self
            .patterns
            .iter()
            .filter(|(needle, _)| content.contains(needle.as_str()))
            .map(|(_, response)| response.as_str())
            .collect();
        pick(&matching, attempt).ok_or(LlmError::ScriptMiss { cache_key: key, attempt })
    }
}

/// Serves answers recorded in exchange logs, matched on `(cache_key, attempt)`.
/// Replayed exchanges keep the backend name of the original recording.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    answers: HashMap<(String, u32), (String, String)>,
}

impl ReplayBackend {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = LlmExchange>) -> Self {
        let mut answers = HashMap::new();
        for ex in exchanges {
            answers.entry((ex.cache_key, ex.attempt)).or_insert((ex.response_text, ex.backend));
        }
        Self { answers }
    }

    pub fn from_logs<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LlmError> {
        let mut all = Vec::new();
        for p in paths {
            all.extend(read_exchange_log(p.as_ref())?);
        }
        Ok(Self::from_exchanges(all))
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, request: &LlmRequest, attempt: u32) -> Result<String, LlmError> {
        let key = request.cache_key();
        self.answers
            .get(&(key.clone(), attempt))
            .map(|(text, _)| text.clone())
            .ok_or(LlmError::ScriptMiss { cache_key: key, attempt })
    }

    fn origin(&self, request: &LlmRequest, attempt: u32) -> Option<String> {
        self.answers.get(&(request.cache_key(), attempt)).map(|(_, backend)| backend.clone())
    }
}
