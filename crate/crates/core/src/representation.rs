//! Final topic words: top c-TF-IDF candidates narrowed down by the LLM.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::collapse::{top_words, CTfIdfModel, CollapseError};
use crate::llm::{parse_topic_list, ChatMessage, LlmClient, LlmError};

pub const REPRESENTATIONS_VERSION: u32 = 1;

pub const DEFAULT_REFINE_TEMPLATE: &str = "From this word list, choose the 10 words most representative of the topic \
'{label}'. Answer as a comma-separated list.\nWords: {candidates}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationSource {
    LlmFiltered,
    CtfidfFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRepresentation {
    pub label: String,
    pub words: Vec<String>,
    pub source: RepresentationSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub n_candidates: usize,
    pub n_words: usize,
    pub max_parse_retries: u32,
    /// `{label}` and `{candidates}` are substituted.
    pub template: String,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            n_candidates: 100,
            n_words: 10,
            max_parse_retries: 2,
            template: DEFAULT_REFINE_TEMPLATE.to_owned(),
        }
    }
}

impl RepresentationConfig {
    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.n_words < 1 {
            problems.push("n_words must be >= 1".to_owned());
        }
        if self.n_candidates < self.n_words {
            problems.push(format!("n_candidates ({}) must be >= n_words ({})", self.n_candidates, self.n_words));
        }
        if !self.template.contains("{candidates}") {
            problems.push("template needs a {candidates} placeholder".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }
}

pub fn candidate_words(model: &CTfIdfModel, label: &str, n: usize) -> Result<Vec<String>, CollapseError> {
    top_words(model, label, n)
}

pub fn render_refine_prompt(template: &str, label: &str, candidates: &[String]) -> String {
    template.replace("{label}", label).replace("{candidates}", &candidates.join(", "))
}

/// Keeps answered words that are candidates, in answer order, then pads from
/// the candidate order up to `n` words.
pub fn filter_and_pad(answer: &[String], candidates: &[String], n: usize) -> Vec<String> {
    let allowed: BTreeSet<&String> = candidates.iter().collect();
    let mut words: Vec<String> = Vec::with_capacity(n);
    for w in answer {
        if words.len() == n {
            break;
        }
        if allowed.contains(w) && !words.contains(w) {
            words.push(w.clone());
        }
    }
    for c in candidates {
        if words.len() == n {
            break;
        }
        if !words.contains(c) {
            words.push(c.clone());
        }
    }
    words
}

pub fn refine_representation(
    label: &str,
    candidates: &[String],
    cfg: &RepresentationConfig,
    client: &LlmClient,
) -> Result<TopicRepresentation, LlmError> {
    if candidates.is_empty() {
        return Ok(TopicRepresentation {
            label: label.to_owned(),
            words: Vec::new(),
            source: RepresentationSource::CtfidfFallback,
        });
    }
    let prompt = render_refine_prompt(&cfg.template, label, candidates);
    let request = client.request(vec![ChatMessage::user(prompt)])?;
    for attempt in 0..=cfg.max_parse_retries {
        let exchange = client.complete_attempt(&request, attempt)?;
        if let Ok(answer) = parse_topic_list(&exchange.response_text) {
            return Ok(TopicRepresentation {
                label: label.to_owned(),
                words: filter_and_pad(&answer.labels, candidates, cfg.n_words),
                source: RepresentationSource::LlmFiltered,
            });
        }
    }
    log::warn!("topic '{label}': no parseable word list, using c-TF-IDF order");
    Ok(TopicRepresentation {
        label: label.to_owned(),
        words: candidates.iter().take(cfg.n_words).cloned().collect(),
        source: RepresentationSource::CtfidfFallback,
    })
}

/// Representations for every topic of the model, in label order.
pub fn represent_topics(
    model: &CTfIdfModel,
    cfg: &RepresentationConfig,
    client: &LlmClient,
) -> Result<Vec<TopicRepresentation>, LlmError> {
    let mut jobs = Vec::with_capacity(model.topic_labels.len());
    for label in &model.topic_labels {
        let candidates = candidate_words(model, label, cfg.n_candidates)
            .map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
        jobs.push((label.clone(), candidates));
    }
    client
        .map_concurrent(&jobs, |(label, candidates)| refine_representation(label, candidates, cfg, client))
        .into_iter()
        .collect()
}

#[derive(Serialize, Deserialize)]
struct RepresentationsArtifact {
    version: u32,
    representations: Vec<TopicRepresentation>,
}

pub fn representations_to_json(reps: &[TopicRepresentation]) -> String {
    crate::artifact::to_canonical_json(&RepresentationsArtifact {
        version: REPRESENTATIONS_VERSION,
        representations: reps.to_vec(),
    })
}

pub fn representations_from_json(json: &str) -> Result<Vec<TopicRepresentation>, String> {
    let a: RepresentationsArtifact = serde_json::from_str(json).map_err(|e| e.to_string())?;
    if a.version != REPRESENTATIONS_VERSION {
        return Err(format!("unsupported representations version {}", a.version));
    }
    Ok(a.representations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::{compute_ctfidf, TopicState};
    use crate::corpus::{Corpus, PreprocessConfig};
    use crate::generation::TopicAssignment;
    use crate::llm::{ScriptEntry, ScriptedBackend};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i:02}")).collect()
    }

    fn client(entries: Vec<ScriptEntry>) -> LlmClient {
        LlmClient::new(Arc::new(ScriptedBackend::from_entries(entries)))
    }

    #[test]
    fn candidates_truncate_at_vocabulary() {
        let corpus = Corpus::from_texts("c", &["a b c d e f g"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[TopicAssignment { doc_id: 0, labels: vec!["t".into()] }]);
        let model = compute_ctfidf(&state, &corpus).unwrap();
        assert_eq!(candidate_words(&model, "t", 100).unwrap().len(), 7);
        assert!(candidate_words(&model, "nope", 100).is_err());
    }

    #[test]
    fn verbatim_answer_passes_through() {
        let cands = words(30);
        let c = client(vec![ScriptEntry::pattern("From this word list", cands[..10].join(", "))]);
        let rep = refine_representation("t", &cands, &RepresentationConfig::default(), &c).unwrap();
        assert_eq!(rep.words, cands[..10]);
        assert_eq!(rep.source, RepresentationSource::LlmFiltered);
    }

    #[test]
    fn hallucinated_words_are_dropped_and_padded() {
        let cands = words(30);
        let mut answer: Vec<String> = vec!["w05".into(), "ghost".into(), "w20".into(), "w01".into()];
        answer.extend(["w07", "phantom", "w11", "w12", "w03", "spirit"].map(String::from));
        let c = client(vec![ScriptEntry::pattern("From this word list", answer.join(", "))]);
        let rep = refine_representation("t", &cands, &RepresentationConfig::default(), &c).unwrap();
        let kept = ["w05", "w20", "w01", "w07", "w11", "w12", "w03"];
        let padded = ["w00", "w02", "w04"];
        let expect: Vec<&str> = kept.iter().chain(padded.iter()).copied().collect();
        assert_eq!(rep.words, expect);
    }

    #[test]
    fn garbage_falls_back_to_ctfidf_order() {
        let cands = words(30);
        let c = client(vec![ScriptEntry::pattern("From this word list", " , ;")]);
        let rep = refine_representation("t", &cands, &RepresentationConfig::default(), &c).unwrap();
        assert_eq!(rep.words, cands[..10]);
        assert_eq!(rep.source, RepresentationSource::CtfidfFallback);
    }

    #[test]
    fn empty_topic_needs_no_call() {
        let c = client(vec![]);
        let rep = refine_representation("t", &[], &RepresentationConfig::default(), &c).unwrap();
        assert!(rep.words.is_empty());
    }

    #[test]
    fn artifact_round_trip() {
        let reps = vec![TopicRepresentation {
            label: "film".into(),
            words: vec!["movie".into()],
            source: RepresentationSource::LlmFiltered,
        }];
        let json = representations_to_json(&reps);
        assert!(json.contains("\"llm_filtered\""));
        assert_eq!(representations_from_json(&json).unwrap(), reps);
    }

    proptest! {
        #[test]
        fn closure_and_size(
            n_cands in 1usize..40,
            answer in proptest::collection::vec(0usize..60, 0..20),
        ) {
            let cands = words(n_cands);
            let answer: Vec<String> = answer.iter().map(|i| format!("w{i:02}")).collect();
            let out = filter_and_pad(&answer, &cands, 10);
            prop_assert_eq!(out.len(), n_cands.min(10));
            let unique: BTreeSet<&String> = out.iter().collect();
            prop_assert_eq!(unique.len(), out.len());
            prop_assert!(out.iter().all(|w| cands.contains(w)));
        }
    }
}
