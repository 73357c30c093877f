//! Parsing of comma-separated topic answers.
//!
//! Rules, applied in order:
//! 1. lowercase the whole response;
//! 2. split items on commas, semicolons and newlines;
//! 3. inside an item, a whitespace-delimited word that is a list marker
//!    (`1.`, `12)`, `-`, `*`, `•`, `+`) ends the current label and starts the next;
//! 4. a leading `topics:` / `answer:` style prefix is dropped;
//! 5. quotes, backticks, dots, dashes, asterisks, bullets and colons are trimmed
//!    from both ends and internal whitespace is collapsed;
//! 6. empty labels are dropped and duplicates removed, keeping the first.

use serde::{Deserialize, Serialize};

use super::LlmError;

const TRIM_CHARS: &[char] = &['"', '\'', '`', '.', '*', '-', '\u{2022}', ':', '\u{201C}', '\u{201D}', '\u{2018}', '\u{2019}'];
const ANSWER_PREFIXES: &[&str] = &["topics", "topic", "answer", "keywords", "words", "labels"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicListAnswer {
    pub labels: Vec<String>,
}

impl TopicListAnswer {
    /// Comma-joined rendering; parsing it again yields the same labels.
    pub fn render(&self) -> String {
        self.labels.join(", ")
    }
}

fn is_marker(word: &str) -> bool {
    if matches!(word, "-" | "*" | "\u{2022}" | "+") {
        return true;
    }
    let Some(body) = word.strip_suffix('.').or_else(|| word.strip_suffix(')')) else {
        return false;
    };
    !body.is_empty() && body.chars().all(|c| c.is_ascii_digit())
}

/// Lowercases, collapses whitespace and trims decoration from a single label.
pub fn normalize_label(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut label = collapsed.trim_matches(|c: char| c.is_whitespace() || TRIM_CHARS.contains(&c));
    while let Some((head, tail)) = label.split_once(':') {
        if !ANSWER_PREFIXES.contains(&head.trim()) {
            break;
        }
        label = tail.trim_matches(|c: char| c.is_whitespace() || TRIM_CHARS.contains(&c));
    }
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalizes one marker-free word group. Trimming can expose a new marker
/// (`-1)` becomes `1)`), in which case the label is split again.
fn emit_labels(words: &[&str], out: &mut Vec<String>) {
    if words.is_empty() {
        return;
    }
    let label = normalize_label(&words.join(" "));
    if label.split(' ').any(is_marker) {
        let mut current = Vec::new();
        for word in label.split(' ') {
            if is_marker(word) {
                emit_labels(&current, out);
                current.clear();
            } else {
                current.push(word);
            }
        }
        emit_labels(&current, out);
        return;
    }
    if !label.is_empty() && !out.contains(&label) {
        out.push(label);
    }
}

pub fn parse_topic_list(response_text: &str) -> Result<TopicListAnswer, LlmError> {
    let lowered = response_text.to_lowercase();
    let mut labels: Vec<String> = Vec::new();
    for item in lowered.split([',', ';', '\n', '\r']) {
        let mut current: Vec<&str> = Vec::new();
        for word in item.split_whitespace() {
            if is_marker(word) {
                emit_labels(&current, &mut labels);
                current.clear();
            } else {
                current.push(word);
            }
        }
        emit_labels(&current, &mut labels);
    }
    if labels.is_empty() {
        return Err(LlmError::Parse);
    }
    Ok(TopicListAnswer { labels })
}
