//! Word-intrusion tasks: four words of a topic plus one word from another topic.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::representation::TopicRepresentation;

pub const WORDS_PER_TASK: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrusionTask {
    pub task_id: usize,
    pub topic_label: String,
    pub shown_words: Vec<String>,
    pub intruder_index: usize,
    pub seed: u64,
}

impl IntrusionTask {
    pub fn intruder(&self) -> &str {
        &self.shown_words[self.intruder_index]
    }
}

/// What annotators see: the task id and the five words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetEntry {
    pub task_id: usize,
    pub words: Vec<String>,
}

pub fn make_intrusion_tasks(
    reps: &[TopicRepresentation],
    tasks_per_topic: usize,
    seed: u64,
) -> Result<Vec<IntrusionTask>, EvaluationError> {
    if reps.len() < 2 {
        return Err(EvaluationError::Domain(format!("intrusion tasks need >= 2 topics, got {}", reps.len())));
    }
    let word_sets: Vec<BTreeSet<&String>> = reps.iter().map(|r| r.words.iter().collect()).collect();
    if let Some((r, s)) = reps.iter().zip(&word_sets).find(|(_, s)| s.len() < WORDS_PER_TASK - 1) {
        return Err(EvaluationError::Domain(format!(
            "topic '{}' has {} distinct words, intrusion needs >= {}",
            r.label,
            s.len(),
            WORDS_PER_TASK - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    for (i, rep) in reps.iter().enumerate() {
        // Other topics that hold at least one word outside this topic.
        let donors: Vec<Vec<&String>> = word_sets
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, other)| other.difference(&word_sets[i]).copied().collect::<Vec<_>>())
            .filter(|legal| !legal.is_empty())
            .collect();
        if donors.is_empty() {
            log::warn!("topic '{}': no legal intruder, skipping its tasks", rep.label);
            continue;
        }
        let own: Vec<&String> = word_sets[i].iter().copied().collect();
        for _ in 0..tasks_per_topic {
            let mut shown: Vec<String> = own.choose_multiple(&mut rng, WORDS_PER_TASK - 1).map(|w| (*w).clone()).collect();
            let legal = donors.choose(&mut rng).expect("donors is non-empty");
            let intruder = (*legal.choose(&mut rng).expect("legal is non-empty")).clone();
            shown.push(intruder.clone());
            shown.shuffle(&mut rng);
            let intruder_index = shown.iter().position(|w| *w == intruder).expect("intruder was shown");
            tasks.push(IntrusionTask {
                task_id: tasks.len(),
                topic_label: rep.label.clone(),
                shown_words: shown,
                intruder_index,
                seed,
            });
        }
    }
    Ok(tasks)
}

pub fn intrusion_sheet(tasks: &[IntrusionTask]) -> Vec<SheetEntry> {
    tasks.iter().map(|t| SheetEntry { task_id: t.task_id, words: t.shown_words.clone() }).collect()
}

/// Parses `{"task_id": chosen_index}`.
pub fn parse_answers(json: &str) -> Result<BTreeMap<usize, usize>, EvaluationError> {
    let raw: BTreeMap<String, usize> =
        serde_json::from_str(json).map_err(|e| EvaluationError::Format(format!("answer sheet: {e}")))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<usize>()
                .map(|id| (id, v))
                .map_err(|_| EvaluationError::Format(format!("answer sheet: '{k}' is not a task id")))
        })
        .collect()
}

/// Fraction of answered tasks where the intruder was picked.
pub fn score_intrusion(tasks: &[IntrusionTask], answers: &BTreeMap<usize, usize>) -> Result<f64, EvaluationError> {
    if answers.is_empty() {
        return Err(EvaluationError::Domain("no answers to score".into()));
    }
    let by_id: BTreeMap<usize, &IntrusionTask> = tasks.iter().map(|t| (t.task_id, t)).collect();
    let mut correct = 0usize;
    for (id, &choice) in answers {
        let task = by_id.get(id).ok_or(EvaluationError::UnknownTask(*id))?;
        if choice == task.intruder_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / answers.len() as f64)
}
