use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pbm::DEFAULT_PBM_TEMPLATE;
use super::CollapseError;
use crate::generation::{TopicAssignment, MISCELLANEOUS};

pub const TOPIC_STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    Pbm,
    Wsm,
    Miscellaneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub absorbed: String,
    pub into: String,
    pub method: MergeMethod,
    /// WSM similarity of the merged pair.
    pub score: Option<f64>,
}

/// Which collapse strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseMethod {
    Pbm,
    Wsm,
    PbmThenWsm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseConfig {
    pub k_target: usize,
    pub g_intermediate: Option<usize>,
    /// Candidate labels per PBM prompt once the full list exceeds the prompt budget.
    pub window_size: usize,
    pub top_words_for_similarity: usize,
    /// Character budget for a single PBM prompt before windowing kicks in.
    pub prompt_budget_chars: usize,
    /// PBM prompt with `{topic}` and `{candidates}` placeholders.
    pub pbm_template: String,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            k_target: 20,
            g_intermediate: None,
            window_size: 50,
            top_words_for_similarity: 20,
            prompt_budget_chars: 3000,
            pbm_template: DEFAULT_PBM_TEMPLATE.to_owned(),
        }
    }
}

impl CollapseConfig {
    pub fn with_k(k_target: usize) -> Self {
        Self { k_target, ..Self::default() }
    }

    /// Checks the constraints that do not depend on the topic count.
    pub fn validate(&self) -> Result<(), CollapseError> {
        let mut problems = Vec::new();
        if self.k_target < 1 {
            problems.push("k_target must be >= 1".to_owned());
        }
        if self.window_size < 2 {
            problems.push("window_size must be >= 2".to_owned());
        }
        if self.top_words_for_similarity < 1 {
            problems.push("top_words_for_similarity must be >= 1".to_owned());
        }
        if let Some(g) = self.g_intermediate {
            if g <= self.k_target {
                problems.push(format!("g_intermediate ({g}) must exceed k_target ({})", self.k_target));
            }
        }
        if !self.pbm_template.contains("{topic}") || !self.pbm_template.contains("{candidates}") {
            problems.push("pbm_template needs {topic} and {candidates} placeholders".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CollapseError::Config(problems.join("; ")))
        }
    }
}

/// Topic label to member documents, with per-label frequencies and the merge history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicState {
    pub topics: BTreeMap<String, BTreeSet<usize>>,
    pub frequency: BTreeMap<String, usize>,
    pub merge_log: Vec<MergeStep>,
}

#[derive(Serialize, Deserialize)]
struct TopicStateArtifact {
    version: u32,
    topics: BTreeMap<String, BTreeSet<usize>>,
    frequency: BTreeMap<String, usize>,
    merge_log: Vec<MergeStep>,
}

impl TopicState {
    pub fn from_assignments(assignments: &[TopicAssignment]) -> Self {
        let mut topics: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for a in assignments {
            for label in &a.labels {
                topics.entry(label.clone()).or_default().insert(a.doc_id);
            }
        }
        let frequency = topics.iter().map(|(l, docs)| (l.clone(), docs.len())).collect();
        Self { topics, frequency, merge_log: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn has_miscellaneous(&self) -> bool {
        self.topics.contains_key(MISCELLANEOUS)
    }

    /// Labels sorted by descending frequency, ties by ascending label.
    pub fn labels_by_frequency(&self) -> Vec<String> {
        let mut labels: Vec<(&String, usize)> =
            self.topics.keys().map(|l| (l, self.frequency.get(l).copied().unwrap_or(0))).collect();
        labels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        labels.into_iter().map(|(l, _)| l.clone()).collect()
    }

    /// Moves `absorbed` into `into`, summing frequencies and uniting documents.
    /// Merging into `miscellaneous` creates that bucket when it does not exist yet.
    pub fn merge(
        &mut self,
        absorbed: &str,
        into: &str,
        method: MergeMethod,
        score: Option<f64>,
    ) -> Result<(), CollapseError> {
        if absorbed == into {
            return Err(CollapseError::InvalidMerge(format!("'{absorbed}' into itself")));
        }
        if absorbed == MISCELLANEOUS {
            return Err(CollapseError::InvalidMerge("the miscellaneous bucket is never absorbed".into()));
        }
        if into != MISCELLANEOUS && !self.topics.contains_key(into) {
            return Err(CollapseError::UnknownLabel(into.to_owned()));
        }
        let docs = self
            .topics
            .remove(absorbed)
            .ok_or_else(|| CollapseError::UnknownLabel(absorbed.to_owned()))?;
        let freq = self.frequency.remove(absorbed).unwrap_or(0);
        self.topics.entry(into.to_owned()).or_default().extend(docs);
        *self.frequency.entry(into.to_owned()).or_insert(0) += freq;
        self.merge_log.push(MergeStep {
            absorbed: absorbed.to_owned(),
            into: into.to_owned(),
            method,
            score,
        });
        Ok(())
    }

    /// Original labels that each current topic is made of, derived from the merge log.
    pub fn lineage(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut lineage: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut seen: BTreeSet<String> = self.topics.keys().cloned().collect();
        for step in &self.merge_log {
            seen.insert(step.absorbed.clone());
            seen.insert(step.into.clone());
        }
        for label in &seen {
            lineage.insert(label.clone(), BTreeSet::from([label.clone()]));
        }
        for step in &self.merge_log {
            let moved = lineage.remove(&step.absorbed).unwrap_or_default();
            lineage.entry(step.into.clone()).or_default().extend(moved);
        }
        lineage.retain(|label, _| self.topics.contains_key(label));
        lineage
    }

    /// Every document that belongs to some topic.
    pub fn covered_documents(&self) -> BTreeSet<usize> {
        self.topics.values().flatten().copied().collect()
    }

    pub fn to_json(&self) -> String {
        crate::artifact::to_canonical_json(&TopicStateArtifact {
            version: TOPIC_STATE_VERSION,
            topics: self.topics.clone(),
            frequency: self.frequency.clone(),
            merge_log: self.merge_log.clone(),
        })
    }

    pub fn from_json(json: &str) -> Result<Self, CollapseError> {
        let a: TopicStateArtifact =
            serde_json::from_str(json).map_err(|e| CollapseError::Artifact(e.to_string()))?;
        if a.version != TOPIC_STATE_VERSION {
            return Err(CollapseError::Artifact(format!("unsupported version {}", a.version)));
        }
        Ok(Self { topics: a.topics, frequency: a.frequency, merge_log: a.merge_log })
    }
}
