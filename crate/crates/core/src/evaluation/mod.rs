//! Coherence, diversity and word-intrusion evaluation of topic representations.

mod cooccurrence;
mod intrusion;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::representation::TopicRepresentation;

pub use cooccurrence::{
    build_cooccurrence, build_cooccurrence_for, npmi_pair, topic_npmi, CooccurrenceStats, NPMI_EPSILON,
};
pub use intrusion::{
    intrusion_sheet, make_intrusion_tasks, parse_answers, score_intrusion, IntrusionTask, SheetEntry, WORDS_PER_TASK,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("{0}")]
    Domain(String),
    #[error("answer for unknown task {0}")]
    UnknownTask(usize),
    #[error("{0}")]
    Format(String),
}

/// Distinct words over total words across all representations; 0 when there are no words.
pub fn topic_diversity(reps: &[TopicRepresentation]) -> f64 {
    let total: usize = reps.iter().map(|r| r.words.len()).sum();
    if total == 0 {
        return 0.0;
    }
    let unique: BTreeSet<&String> = reps.iter().flat_map(|r| &r.words).collect();
    unique.len() as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub k: usize,
    pub npmi_window: usize,
    pub per_topic_npmi: BTreeMap<String, f64>,
    pub mean_npmi: f64,
    pub topic_diversity: f64,
}

/// NPMI against the modeled corpus plus topic diversity.
///
/// Topics with fewer than two words get no NPMI entry and do not enter the mean.
pub fn evaluate(
    corpus: &Corpus,
    reps: &[TopicRepresentation],
    npmi_window: usize,
) -> Result<EvaluationReport, EvaluationError> {
    let vocabulary: BTreeSet<String> = reps.iter().flat_map(|r| r.words.iter().cloned()).collect();
    let stats = build_cooccurrence_for(corpus, npmi_window, &vocabulary)?;
    let mut per_topic_npmi = BTreeMap::new();
    for rep in reps {
        if rep.words.len() < 2 {
            log::warn!("topic '{}' has {} word(s), no NPMI", rep.label, rep.words.len());
            continue;
        }
        per_topic_npmi.insert(rep.label.clone(), topic_npmi(&stats, &rep.words)?);
    }
    let mean_npmi = if per_topic_npmi.is_empty() {
        0.0
    } else {
        per_topic_npmi.values().sum::<f64>() / per_topic_npmi.len() as f64
    };
    Ok(EvaluationReport {
        version: REPORT_VERSION,
        k: reps.len(),
        npmi_window,
        per_topic_npmi,
        mean_npmi,
        topic_diversity: topic_diversity(reps),
    })
}
