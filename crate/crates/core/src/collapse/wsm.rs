//! Word-similarity matching.
//!
//! Each round recomputes c-TF-IDF for the current topics, takes every topic's
//! top words, and merges the pair with the largest overlap. Ties go to the
//! pair with the larger combined frequency, then to the lexicographically
//! smaller `(label, label)` pair. The merged topic keeps the label of the more
//! frequent side (the smaller label on a tie). The miscellaneous bucket takes
//! part in the scoring but is never paired.
//!
//! Term counts are maintained incrementally; only topics whose top-word set
//! changed get their pair overlaps recomputed.

use std::collections::{BTreeSet, HashMap};

use super::ctfidf::ctfidf_score;
use super::{CollapseConfig, CollapseError, MergeMethod, TopicState};
use crate::corpus::Corpus;
use crate::generation::MISCELLANEOUS;

/// `|set(a) ∩ set(b)| / denom`.
pub fn wsm_similarity(a_words: &[String], b_words: &[String], denom: usize) -> Result<f64, CollapseError> {
    if denom == 0 {
        return Err(CollapseError::Domain("similarity denominator must be > 0".into()));
    }
    let a: BTreeSet<&String> = a_words.iter().collect();
    let b: BTreeSet<&String> = b_words.iter().collect();
    Ok(a.intersection(&b).count() as f64 / denom as f64)
}

struct Slot {
    label: String,
    docs: BTreeSet<usize>,
    freq: usize,
    tf: HashMap<u32, u64>,
    alive: bool,
    misc: bool,
    /// Top token ids, sorted by id.
    top: Vec<u32>,
}

fn top_ids(tf: &HashMap<u32, u64>, avg: f64, f: &[u64], m: usize) -> Vec<u32> {
    let mut ranked: Vec<(f64, u32)> = tf
        .iter()
        .map(|(&t, &n)| (ctfidf_score(n as usize, avg, f[t as usize] as usize), t))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if ranked.len() > m {
        if m > 0 {
            ranked.select_nth_unstable_by(m - 1, order);
        }
        ranked.truncate(m);
    }
    let mut ids: Vec<u32> = ranked.into_iter().map(|(_, t)| t).collect();
    ids.sort_unstable();
    ids
}

fn overlap(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

pub fn collapse_wsm(state: &TopicState, corpus: &Corpus, cfg: &CollapseConfig) -> Result<TopicState, CollapseError> {
    if cfg.k_target < 1 {
        return Err(CollapseError::Config("k_target must be >= 1".into()));
    }
    if cfg.top_words_for_similarity < 1 {
        return Err(CollapseError::Config("top_words_for_similarity must be >= 1".into()));
    }
    let k = cfg.k_target;
    if k > state.len() {
        return Err(CollapseError::Config(format!(
            "k_target ({k}) exceeds the number of topics ({})",
            state.len()
        )));
    }
    let misc = usize::from(state.has_miscellaneous());
    if k < 1 + misc && state.len() > k {
        return Err(CollapseError::Config(
            "k_target must leave room for a topic besides miscellaneous".into(),
        ));
    }
    let mut out = state.clone();
    if state.len() == k {
        return Ok(out);
    }

    // Token ids follow lexicographic order, so id order doubles as the tie-break.
    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    for docs in state.topics.values() {
        for &id in docs {
            let doc = corpus.get(id).ok_or(CollapseError::UnknownDocument(id))?;
            vocab.extend(doc.tokens.iter().map(String::as_str));
        }
    }
    let token_id: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, t)| (*t, i as u32)).collect();
    let doc_ids = |doc: usize| -> Vec<u32> { corpus.documents[doc].tokens.iter().map(|t| token_id[t.as_str()]).collect() };

    let mut f = vec![0u64; vocab.len()];
    let mut total = 0u64;
    let mut slots: Vec<Slot> = Vec::with_capacity(state.len());
    for (label, docs) in &state.topics {
        let mut tf: HashMap<u32, u64> = HashMap::new();
        for &d in docs {
            for t in doc_ids(d) {
                *tf.entry(t).or_insert(0) += 1;
                f[t as usize] += 1;
                total += 1;
            }
        }
        slots.push(Slot {
            label: label.clone(),
            docs: docs.clone(),
            freq: state.frequency.get(label).copied().unwrap_or(0),
            tf,
            alive: true,
            misc: label == MISCELLANEOUS,
            top: Vec::new(),
        });
    }

    let n = slots.len();
    let m = cfg.top_words_for_similarity;
    let mut overlaps = vec![vec![0usize; n]; n];
    let mut alive = n;
    let mut first_round = true;

    while alive > k {
        let avg = total as f64 / alive as f64;
        let mut changed = Vec::new();
        for (i, slot) in slots.iter_mut().enumerate() {
            if !slot.alive || slot.misc {
                continue;
            }
            let top = top_ids(&slot.tf, avg, &f, m);
            if first_round || top != slot.top {
                slot.top = top;
                changed.push(i);
            }
        }
        first_round = false;
        for &i in &changed {
            for j in 0..n {
                if j != i && slots[j].alive && !slots[j].misc {
                    let o = overlap(&slots[i].top, &slots[j].top);
                    overlaps[i][j] = o;
                    overlaps[j][i] = o;
                }
            }
        }

        // Slots are in label order, so (i, j) with i < j is the lexicographic pair.
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !slots[i].alive || slots[i].misc {
                continue;
            }
            for j in (i + 1)..n {
                if !slots[j].alive || slots[j].misc {
                    continue;
                }
                let o = overlaps[i][j];
                let combined = slots[i].freq + slots[j].freq;
                let better = match best {
                    None => true,
                    Some((bo, bc, _, _)) => o > bo || (o == bo && combined > bc),
                };
                if better {
                    best = Some((o, combined, i, j));
                }
            }
        }
        let (o, _, i, j) = best.ok_or_else(|| CollapseError::Domain("no mergeable topic pair left".into()))?;
        let (into, absorbed) = if slots[j].freq > slots[i].freq { (j, i) } else { (i, j) };

        out.merge(
            &slots[absorbed].label.clone(),
            &slots[into].label.clone(),
            MergeMethod::Wsm,
            Some(o as f64 / m as f64),
        )?;

        let absorbed_slot = std::mem::replace(
            &mut slots[absorbed],
            Slot {
                label: String::new(),
                docs: BTreeSet::new(),
                freq: 0,
                tf: HashMap::new(),
                alive: false,
                misc: false,
                top: Vec::new(),
            },
        );
        for (&t, &c) in &absorbed_slot.tf {
            f[t as usize] -= c;
            total -= c;
        }
        let target = &mut slots[into];
        for &d in absorbed_slot.docs.difference(&target.docs.clone()) {
            for t in doc_ids(d) {
                *target.tf.entry(t).or_insert(0) += 1;
                f[t as usize] += 1;
                total += 1;
            }
        }
        target.docs.extend(absorbed_slot.docs);
        target.freq += absorbed_slot.freq;
        alive -= 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::{compute_ctfidf, top_words};
    use crate::corpus::PreprocessConfig;
    use crate::generation::TopicAssignment;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn similarity_values() {
        let a: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        assert_eq!(wsm_similarity(&a, &a, 20).unwrap(), 1.0);
        assert_eq!(wsm_similarity(&words(&["x"]), &words(&["y"]), 20).unwrap(), 0.0);
        assert_eq!(wsm_similarity(&words(&["x", "y", "z"]), &words(&["y", "z", "w"]), 20).unwrap(), 0.1);
        assert!(matches!(wsm_similarity(&a, &a, 0), Err(CollapseError::Domain(_))));
    }

    fn build(docs: &[&str], labels: &[&[&str]]) -> (TopicState, Corpus) {
        let corpus = Corpus::from_texts("w", docs, &PreprocessConfig::default()).unwrap();
        let assignments: Vec<TopicAssignment> = labels
            .iter()
            .enumerate()
            .map(|(i, ls)| TopicAssignment { doc_id: i, labels: words(ls) })
            .collect();
        (TopicState::from_assignments(&assignments), corpus)
    }

    #[test]
    fn fixed_point_when_k_equals_count() {
        let (s, c) = build(&["a b", "c d"], &[&["x"], &["y"]]);
        let out = collapse_wsm(&s, &c, &CollapseConfig::with_k(2)).unwrap();
        assert_eq!(out, s);
        assert!(matches!(collapse_wsm(&s, &c, &CollapseConfig::with_k(3)), Err(CollapseError::Config(_))));
    }

    #[test]
    fn duplicated_topics_merge_first_with_full_similarity() {
        let (s, c) = build(
            &["apple banana cherry", "engine wheel brake", "violin piano drum"],
            &[&["fruit", "produce"], &["cars", "vehicles"], &["music", "instruments"]],
        );
        let cfg = CollapseConfig { top_words_for_similarity: 3, ..CollapseConfig::with_k(3) };
        let out = collapse_wsm(&s, &c, &cfg).unwrap();
        assert_eq!(out.merge_log.len(), 3);
        for step in &out.merge_log {
            assert_eq!(step.score, Some(1.0));
        }
        let mut pairs: Vec<(String, String)> = out
            .merge_log
            .iter()
            .map(|st| {
                let mut p = [st.absorbed.clone(), st.into.clone()];
                p.sort();
                (p[0].clone(), p[1].clone())
            })
            .collect();
        pairs.sort();
        assert_eq!(
            pairs,
            [
                ("cars".into(), "vehicles".into()),
                ("fruit".into(), "produce".into()),
                ("instruments".into(), "music".into())
            ]
        );
    }

    #[test]
    fn miscellaneous_is_never_paired() {
        let (s, c) = build(&["a b", "a b", "a b"], &[&["x"], &["y"], &[MISCELLANEOUS]]);
        let out = collapse_wsm(&s, &c, &CollapseConfig::with_k(2)).unwrap();
        assert!(out.has_miscellaneous());
        assert!(out.merge_log.iter().all(|st| st.absorbed != MISCELLANEOUS && st.into != MISCELLANEOUS));
        assert!(collapse_wsm(&s, &c, &CollapseConfig::with_k(1)).is_err());
    }

    /// Reference implementation: full c-TF-IDF rebuild every round.
    fn naive_wsm(state: &TopicState, corpus: &Corpus, k: usize, m: usize) -> TopicState {
        let mut s = state.clone();
        while s.len() > k {
            let model = compute_ctfidf(&s, corpus).unwrap();
            let labels: Vec<String> = s.topics.keys().filter(|l| *l != MISCELLANEOUS).cloned().collect();
            let tops: Vec<Vec<String>> = labels.iter().map(|l| top_words(&model, l, m).unwrap()).collect();
            let mut best: Option<(f64, usize, usize, usize)> = None;
            for i in 0..labels.len() {
                for j in (i + 1)..labels.len() {
                    let sim = wsm_similarity(&tops[i], &tops[j], m).unwrap();
                    let comb = s.frequency[&labels[i]] + s.frequency[&labels[j]];
                    let better = match best {
                        None => true,
                        Some((bs, bc, _, _)) => sim > bs || (sim == bs && comb > bc),
                    };
                    if better {
                        best = Some((sim, comb, i, j));
                    }
                }
            }
            let (sim, _, i, j) = best.unwrap();
            let (into, absorbed) = if s.frequency[&labels[j]] > s.frequency[&labels[i]] { (j, i) } else { (i, j) };
            s.merge(&labels[absorbed], &labels[into], MergeMethod::Wsm, Some(sim)).unwrap();
        }
        s
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn incremental_matches_full_recompute(
            docs in proptest::collection::vec(proptest::collection::vec(0u8..12, 1..8), 4..14),
            label_picks in proptest::collection::vec(proptest::collection::vec(0u8..8, 1..3), 14),
            k in 1usize..4,
            m in 2usize..6,
        ) {
            let texts: Vec<String> = docs.iter().map(|d| d.iter().map(|t| format!("w{t}")).collect::<Vec<_>>().join(" ")).collect();
            let corpus = Corpus::from_documents("p", texts.iter().enumerate().map(|(id, t)| crate::corpus::Document {
                id, raw_text: t.clone(), tokens: t.split(' ').map(String::from).collect(), label: None,
            }).collect());
            let assignments: Vec<TopicAssignment> = (0..texts.len()).map(|i| TopicAssignment {
                doc_id: i,
                labels: label_picks[i].iter().map(|l| format!("topic{l}")).collect(),
            }).collect();
            let state = TopicState::from_assignments(&assignments);
            prop_assume!(state.len() >= k);
            let cfg = CollapseConfig { top_words_for_similarity: m, ..CollapseConfig::with_k(k) };
            let fast = collapse_wsm(&state, &corpus, &cfg).unwrap();
            let slow = naive_wsm(&state, &corpus, k, m);
            prop_assert_eq!(fast, slow);
        }
    }
}
