//! Prompt-based matching.
//!
//! Each round sorts the non-miscellaneous topics by descending frequency (ties
//! by label) and takes the last one. The topics ranked above it are the merge
//! candidates. If the whole candidate list fits in the prompt budget it goes
//! out in one prompt, otherwise in windows of `window_size` labels, in rank
//! order. The first window whose answer names one of its candidates wins and
//! the round restarts; when no window does, the topic moves into the
//! miscellaneous bucket.
//!
//! The miscellaneous bucket counts toward `k_target`. The round that first
//! creates it leaves the topic count unchanged.

use super::{CollapseConfig, CollapseError, MergeMethod, TopicState};
use crate::generation::MISCELLANEOUS;
use crate::llm::{parse_topic_list, ChatMessage, LlmClient};

pub const DEFAULT_PBM_TEMPLATE: &str = "Which of the following topics, if any, should {topic} be merged into? \
Answer with exactly one topic from the list, or 'none'.\nTopics: {candidates}";

pub fn render_pbm_prompt(template: &str, topic: &str, candidates: &[String]) -> String {
    template.replace("{topic}", topic).replace("{candidates}", &candidates.join(", "))
}

fn windows<'a>(cfg: &CollapseConfig, topic: &str, candidates: &'a [String]) -> Vec<&'a [String]> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let full = render_pbm_prompt(&cfg.pbm_template, topic, candidates);
    if full.chars().count() <= cfg.prompt_budget_chars {
        vec![candidates]
    } else {
        candidates.chunks(cfg.window_size).collect()
    }
}

/// Asks about one topic; returns the candidate it should merge into, if any.
fn decide(
    topic: &str,
    candidates: &[String],
    cfg: &CollapseConfig,
    client: &LlmClient,
) -> Result<Option<String>, CollapseError> {
    for window in windows(cfg, topic, candidates) {
        let prompt = render_pbm_prompt(&cfg.pbm_template, topic, window);
        let request = client.request(vec![ChatMessage::user(prompt)])?;
        let exchange = client.complete(&request)?;
        let Ok(answer) = parse_topic_list(&exchange.response_text) else {
            continue;
        };
        let choice = &answer.labels[0];
        if window.contains(choice) {
            return Ok(Some(choice.clone()));
        }
        if choice != "none" {
            log::warn!("PBM answer '{choice}' for '{topic}' is not a candidate in this window");
        }
    }
    Ok(None)
}

pub fn collapse_pbm(state: &TopicState, cfg: &CollapseConfig, client: &LlmClient) -> Result<TopicState, CollapseError> {
    if cfg.k_target < 1 {
        return Err(CollapseError::Config("k_target must be >= 1".into()));
    }
    if cfg.window_size < 2 {
        return Err(CollapseError::Config("window_size must be >= 2".into()));
    }
    if cfg.k_target > state.len() {
        return Err(CollapseError::Config(format!(
            "k_target ({}) exceeds the number of topics ({})",
            cfg.k_target,
            state.len()
        )));
    }
    let mut out = state.clone();
    while out.len() > cfg.k_target {
        let mut ranked = out.labels_by_frequency();
        ranked.retain(|l| l != MISCELLANEOUS);
        let Some(topic) = ranked.pop() else {
            break;
        };
        match decide(&topic, &ranked, cfg, client)? {
            Some(into) => out.merge(&topic, &into, MergeMethod::Pbm, None)?,
            None => out.merge(&topic, MISCELLANEOUS, MergeMethod::Miscellaneous, None)?,
        }
    }
    Ok(out)
}

/// PBM down to `g_intermediate` topics, requiring `k_target < G < n`.
pub fn compress_to_g(state: &TopicState, cfg: &CollapseConfig, client: &LlmClient) -> Result<TopicState, CollapseError> {
    let g = cfg
        .g_intermediate
        .ok_or_else(|| CollapseError::Config("g_intermediate is not set".into()))?;
    let n = state.len();
    if !(cfg.k_target < g && g < n) {
        return Err(CollapseError::Config(format!(
            "need k_target < g_intermediate < topic count, got {} < {g} < {n}",
            cfg.k_target
        )));
    }
    let stage = CollapseConfig { k_target: g, ..cfg.clone() };
    collapse_pbm(state, &stage, client)
}
