//! Sliding-window co-occurrence counts and NPMI.
//!
//! A document of length L yields L - w + 1 windows, or one window when
//! L <= w; empty documents yield none. Each window counts every distinct token
//! and every distinct unordered token pair once.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::EvaluationError;
use crate::corpus::Corpus;

pub const NPMI_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CooccurrenceStats {
    pub window_size: usize,
    pub total_windows: usize,
    pub word_window_count: HashMap<String, usize>,
    /// Keyed by `(min, max)` of the two tokens.
    pub pair_window_count: HashMap<(String, String), usize>,
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CooccurrenceStats {
    pub fn word_count(&self, w: &str) -> usize {
        self.word_window_count.get(w).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &str, b: &str) -> usize {
        if a == b {
            return self.word_count(a);
        }
        let (x, y) = ordered(a, b);
        self.pair_window_count.get(&(x.to_owned(), y.to_owned())).copied().unwrap_or(0)
    }
}

/// Counts over the whole vocabulary.
pub fn build_cooccurrence(corpus: &Corpus, window_size: usize) -> Result<CooccurrenceStats, EvaluationError> {
    build(corpus, window_size, None)
}

/// Counts restricted to `vocabulary`; probabilities of those words and their
/// pairs equal the ones from [`build_cooccurrence`].
pub fn build_cooccurrence_for(
    corpus: &Corpus,
    window_size: usize,
    vocabulary: &BTreeSet<String>,
) -> Result<CooccurrenceStats, EvaluationError> {
    build(corpus, window_size, Some(vocabulary))
}

fn build(
    corpus: &Corpus,
    window_size: usize,
    vocabulary: Option<&BTreeSet<String>>,
) -> Result<CooccurrenceStats, EvaluationError> {
    if window_size < 2 {
        return Err(EvaluationError::Domain(format!("window_size must be >= 2, got {window_size}")));
    }
    let mut stats = CooccurrenceStats { window_size, ..Default::default() };
    let mut present: Vec<&str> = Vec::with_capacity(window_size);
    let mut seen: HashSet<&str> = HashSet::with_capacity(window_size);
    for doc in &corpus.documents {
        let tokens = &doc.tokens;
        if tokens.is_empty() {
            continue;
        }
        let n_windows = tokens.len().saturating_sub(window_size) + 1;
        for start in 0..n_windows {
            let end = (start + window_size).min(tokens.len());
            present.clear();
            seen.clear();
            for t in &tokens[start..end] {
                let t = t.as_str();
                if vocabulary.is_some_and(|v| !v.contains(t)) {
                    continue;
                }
                if seen.insert(t) {
                    present.push(t);
                }
            }
            stats.total_windows += 1;
            for (i, &a) in present.iter().enumerate() {
                *stats.word_window_count.entry(a.to_owned()).or_insert(0) += 1;
                for &b in &present[i + 1..] {
                    let (x, y) = ordered(a, b);
                    *stats.pair_window_count.entry((x.to_owned(), y.to_owned())).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(stats)
}

/// NPMI of two words; -1 if either never occurs.
pub fn npmi_pair(stats: &CooccurrenceStats, w1: &str, w2: &str) -> Result<f64, EvaluationError> {
    if stats.total_windows == 0 {
        return Err(EvaluationError::Domain("no windows in the reference statistics".into()));
    }
    let total = stats.total_windows as f64;
    let (c1, c2) = (stats.word_count(w1), stats.word_count(w2));
    if c1 == 0 || c2 == 0 {
        return Ok(-1.0);
    }
    let p1 = c1 as f64 / total;
    if w1 == w2 {
        return Ok(if p1 < 1.0 { 1.0 } else { 0.0 });
    }
    let p2 = c2 as f64 / total;
    let p12 = stats.pair_count(w1, w2) as f64 / total;
    if p12 >= 1.0 {
        return Ok(0.0);
    }
    let joint = p12 + NPMI_EPSILON;
    let npmi = (joint / (p1 * p2)).ln() / -joint.ln();
    Ok(npmi.clamp(-1.0, 1.0))
}

/// Mean NPMI over all unordered pairs of `words`.
pub fn topic_npmi(stats: &CooccurrenceStats, words: &[String]) -> Result<f64, EvaluationError> {
    if words.len() < 2 {
        return Err(EvaluationError::Domain(format!("topic_npmi needs >= 2 words, got {}", words.len())));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            sum += npmi_pair(stats, &words[i], &words[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}
