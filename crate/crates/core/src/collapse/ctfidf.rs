//! Class-based TF-IDF over per-topic pseudo-documents.
//!
//! score(t, c) = tf(t, c) * ln(1 + A / f(t)), where tf(t, c) counts t in the
//! concatenation of topic c's documents, A is the mean pseudo-document length
//! and f(t) is the count of t summed over all pseudo-documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CollapseError, TopicState};
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTfIdfModel {
    pub topic_labels: Vec<String>,
    pub term_scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub class_average_words: f64,
    pub term_class_frequency: BTreeMap<String, usize>,
}

#[inline]
pub fn ctfidf_score(tf: usize, class_average_words: f64, term_class_frequency: usize) -> f64 {
    tf as f64 * (1.0 + class_average_words / term_class_frequency as f64).ln()
}

pub fn compute_ctfidf(state: &TopicState, corpus: &Corpus) -> Result<CTfIdfModel, CollapseError> {
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for (label, docs) in &state.topics {
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for &id in docs {
            let doc = corpus.get(id).ok_or(CollapseError::UnknownDocument(id))?;
            for tok in &doc.tokens {
                *tf.entry(tok.clone()).or_insert(0) += 1;
            }
        }
        counts.insert(label.clone(), tf);
    }
    Ok(CTfIdfModel::from_counts(counts))
}

impl CTfIdfModel {
    /// Builds scores from per-topic term counts.
    pub fn from_counts(counts: BTreeMap<String, BTreeMap<String, usize>>) -> Self {
        let mut term_class_frequency: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for tf in counts.values() {
            for (tok, &n) in tf {
                *term_class_frequency.entry(tok.clone()).or_insert(0) += n;
                total += n;
            }
        }
        let class_average_words = if counts.is_empty() { 0.0 } else { total as f64 / counts.len() as f64 };
        let term_scores = counts
            .iter()
            .map(|(label, tf)| {
                let scores = tf
                    .iter()
                    .map(|(tok, &n)| (tok.clone(), ctfidf_score(n, class_average_words, term_class_frequency[tok])))
                    .collect();
                (label.clone(), scores)
            })
            .collect();
        Self {
            topic_labels: counts.keys().cloned().collect(),
            term_scores,
            class_average_words,
            term_class_frequency,
        }
    }

    pub fn scores(&self, label: &str) -> Result<&BTreeMap<String, f64>, CollapseError> {
        self.term_scores.get(label).ok_or_else(|| CollapseError::UnknownLabel(label.to_owned()))
    }
}

/// The `m` best-scoring tokens of a topic, score descending, ties by token.
pub fn top_words(model: &CTfIdfModel, label: &str, m: usize) -> Result<Vec<String>, CollapseError> {
    let scores = model.scores(label)?;
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(t, &s)| (t, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(m).map(|(t, _)| t.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PreprocessConfig;
    use crate::generation::TopicAssignment;

    fn toy() -> (TopicState, Corpus) {
        let corpus = Corpus::from_texts("toy", &["a a b", "b c", "c c c"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[
            TopicAssignment { doc_id: 0, labels: vec!["t0".into()] },
            TopicAssignment { doc_id: 1, labels: vec!["t1".into()] },
            TopicAssignment { doc_id: 2, labels: vec!["t2".into()] },
        ]);
        (state, corpus)
    }

    #[test]
    fn single_topic_collapses_to_tf_times_log() {
        let corpus = Corpus::from_texts("one", &["x y y", "y z"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[
            TopicAssignment { doc_id: 0, labels: vec!["all".into()] },
            TopicAssignment { doc_id: 1, labels: vec!["all".into()] },
        ]);
        let m = compute_ctfidf(&state, &corpus).unwrap();
        assert_eq!(m.class_average_words, 5.0);
        let s = &m.term_scores["all"];
        assert!((s["y"] - 3.0 * (1.0f64 + 5.0 / 3.0).ln()).abs() < 1e-12);
        assert!((s["x"] - (1.0f64 + 5.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn shared_token_scores_below_exclusive_token() {
        // "s" occurs once in each topic, "e" once only in t0.
        let corpus = Corpus::from_texts("m", &["s e", "s f", "s g"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[
            TopicAssignment { doc_id: 0, labels: vec!["t0".into()] },
            TopicAssignment { doc_id: 1, labels: vec!["t1".into()] },
            TopicAssignment { doc_id: 2, labels: vec!["t2".into()] },
        ]);
        let m = compute_ctfidf(&state, &corpus).unwrap();
        assert!(m.term_scores["t0"]["s"] < m.term_scores["t0"]["e"]);
    }

    #[test]
    fn toy_table_matches_hand_values() {
        let (state, corpus) = toy();
        let m = compute_ctfidf(&state, &corpus).unwrap();
        // 8 tokens over 3 topics; f(a)=2, f(b)=2, f(c)=4.
        let a = 8.0 / 3.0;
        let expect = |tf: f64, f: f64| tf * (1.0 + a / f).ln();
        let cases = [
            ("t0", "a", expect(2.0, 2.0)),
            ("t0", "b", expect(1.0, 2.0)),
            ("t1", "b", expect(1.0, 2.0)),
            ("t1", "c", expect(1.0, 4.0)),
            ("t2", "c", expect(3.0, 4.0)),
        ];
        for (topic, tok, want) in cases {
            let got = m.term_scores[topic][tok];
            assert!(((got - want) / want).abs() <= 1e-9, "{topic}/{tok}");
        }
        assert_eq!(m.term_scores["t0"].len(), 2);
    }

    #[test]
    fn top_words_ordering_and_ties() {
        let (state, corpus) = toy();
        let m = compute_ctfidf(&state, &corpus).unwrap();
        assert_eq!(top_words(&m, "t0", 2).unwrap(), ["a", "b"]);
        assert_eq!(top_words(&m, "t1", 2).unwrap(), ["b", "c"]);
        assert_eq!(top_words(&m, "t2", 5).unwrap(), ["c"]);
        assert!(top_words(&m, "t0", 0).unwrap().is_empty());
        assert!(matches!(top_words(&m, "zz", 3), Err(CollapseError::UnknownLabel(_))));

        let corpus = Corpus::from_texts("tie", &["pear apple"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[TopicAssignment { doc_id: 0, labels: vec!["f".into()] }]);
        let m = compute_ctfidf(&state, &corpus).unwrap();
        assert_eq!(top_words(&m, "f", 2).unwrap(), ["apple", "pear"]);
    }

    #[test]
    fn empty_topic_has_empty_scores() {
        let corpus = Corpus::from_texts("e", &["", "x"], &PreprocessConfig::default()).unwrap();
        let state = TopicState::from_assignments(&[
            TopicAssignment { doc_id: 0, labels: vec!["empty".into()] },
            TopicAssignment { doc_id: 1, labels: vec!["full".into()] },
        ]);
        let m = compute_ctfidf(&state, &corpus).unwrap();
        assert!(m.term_scores["empty"].is_empty());
    }

    #[test]
    fn unknown_document_is_rejected() {
        let (_, corpus) = toy();
        let state = TopicState::from_assignments(&[TopicAssignment { doc_id: 9, labels: vec!["x".into()] }]);
        assert!(matches!(compute_ctfidf(&state, &corpus), Err(CollapseError::UnknownDocument(9))));
    }
}
