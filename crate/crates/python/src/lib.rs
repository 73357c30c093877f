//! Python bindings for the prompttopic core library.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use prompttopic_core::collapse::{self, CollapseConfig, TopicState};
use prompttopic_core::corpus::{self, english_stopwords, InputFormat, PreprocessConfig};
use prompttopic_core::evaluation;
use prompttopic_core::generation::TopicAssignment;
use prompttopic_core::llm;
use prompttopic_core::pipeline::{self, BackendKind, Overrides, Stage};
use prompttopic_core::representation::{RepresentationSource, TopicRepresentation};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn preprocess(stopwords: &str, lemmatize: bool, min_token_length: usize) -> PyResult<PreprocessConfig> {
    let stopword_list = match stopwords {
        "english" => english_stopwords().clone(),
        "none" => BTreeSet::new(),
        other => return Err(value_err(format!("stopwords must be 'english' or 'none', got '{other}'"))),
    };
    Ok(PreprocessConfig { stopword_list, lemmatize, min_token_length, ..PreprocessConfig::default() })
}

/// Per-document label lists become assignments keyed by position.
fn assignments(labels: Vec<Vec<String>>) -> Vec<TopicAssignment> {
    labels.into_iter().enumerate().map(|(doc_id, labels)| TopicAssignment { doc_id, labels }).collect()
}

fn reps(topics: BTreeMap<String, Vec<String>>) -> Vec<TopicRepresentation> {
    topics
        .into_iter()
        .map(|(label, words)| TopicRepresentation { label, words, source: RepresentationSource::LlmFiltered })
        .collect()
}

#[pyclass(name = "Corpus", module = "prompttopic", frozen)]
struct PyCorpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    #[pyo3(signature = (texts, stopwords = "none", lemmatize = false, min_token_length = 1))]
    fn from_texts(texts: Vec<String>, stopwords: &str, lemmatize: bool, min_token_length: usize) -> PyResult<Self> {
        let cfg = preprocess(stopwords, lemmatize, min_token_length)?;
        let inner = corpus::Corpus::from_texts("python", &texts, &cfg).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format = "plain-lines", stopwords = "none", lemmatize = false, min_token_length = 1))]
    fn ingest(path: PathBuf, format: &str, stopwords: &str, lemmatize: bool, min_token_length: usize) -> PyResult<Self> {
        let format = match format {
            "plain-lines" => InputFormat::PlainLines,
            "json-lines" => InputFormat::JsonLines,
            other => return Err(value_err(format!("unknown format '{other}'"))),
        };
        let cfg = preprocess(stopwords, lemmatize, min_token_length)?;
        let inner = corpus::ingest(&path, format, &cfg).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn tokens(&self, doc_id: usize) -> PyResult<Vec<String>> {
        self.inner.get(doc_id).map(|d| d.tokens.clone()).ok_or_else(|| value_err(format!("no document {doc_id}")))
    }

    /// `(size, avg_tokens, avg_raw_words)`.
    fn stats(&self) -> (usize, f64, f64) {
        let s = corpus::corpus_stats(&self.inner);
        (s.size, s.avg_tokens, s.avg_raw_words)
    }
}

/// c-TF-IDF scores per topic, from one label list per document.
#[pyfunction]
fn ctfidf(corpus: &PyCorpus, labels: Vec<Vec<String>>) -> PyResult<BTreeMap<String, BTreeMap<String, f64>>> {
    let state = TopicState::from_assignments(&assignments(labels));
    let model = collapse::compute_ctfidf(&state, &corpus.inner).map_err(value_err)?;
    Ok(model.term_scores)
}

#[pyfunction]
fn top_words(corpus: &PyCorpus, labels: Vec<Vec<String>>, label: &str, n: usize) -> PyResult<Vec<String>> {
    let state = TopicState::from_assignments(&assignments(labels));
    let model = collapse::compute_ctfidf(&state, &corpus.inner).map_err(value_err)?;
    collapse::top_words(&model, label, n).map_err(value_err)
}

/// Merges by word-set overlap down to `k` topics.
/// Returns the final `{label: [doc_id, ...]}` and the `(absorbed, into)` merge log.
#[pyfunction]
#[pyo3(signature = (corpus, labels, k, top_words = 10))]
fn collapse_wsm(
    corpus: &PyCorpus,
    labels: Vec<Vec<String>>,
    k: usize,
    top_words: usize,
) -> PyResult<(BTreeMap<String, Vec<usize>>, Vec<(String, String)>)> {
    let state = TopicState::from_assignments(&assignments(labels));
    let cfg = CollapseConfig { top_words_for_similarity: top_words, ..CollapseConfig::with_k(k) };
    let out = collapse::collapse_wsm(&state, &corpus.inner, &cfg).map_err(value_err)?;
    let topics = out.topics.into_iter().map(|(l, d)| (l, d.into_iter().collect())).collect();
    let log = out.merge_log.into_iter().map(|s| (s.absorbed, s.into)).collect();
    Ok((topics, log))
}

#[pyfunction]
#[pyo3(signature = (corpus, w1, w2, window = 10))]
fn npmi(corpus: &PyCorpus, w1: &str, w2: &str, window: usize) -> PyResult<f64> {
    let stats = evaluation::build_cooccurrence(&corpus.inner, window).map_err(value_err)?;
    evaluation::npmi_pair(&stats, w1, w2).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (corpus, words, window = 10))]
fn topic_npmi(corpus: &PyCorpus, words: Vec<String>, window: usize) -> PyResult<f64> {
    let stats = evaluation::build_cooccurrence(&corpus.inner, window).map_err(value_err)?;
    evaluation::topic_npmi(&stats, &words).map_err(value_err)
}

#[pyfunction]
fn topic_diversity(topics: BTreeMap<String, Vec<String>>) -> f64 {
    evaluation::topic_diversity(&reps(topics))
}

/// Returns `(task_id, topic_label, shown_words, intruder_index)` tuples.
#[pyfunction]
#[pyo3(signature = (topics, tasks_per_topic = 5, seed = 0))]
fn make_intrusion_tasks(
    topics: BTreeMap<String, Vec<String>>,
    tasks_per_topic: usize,
    seed: u64,
) -> PyResult<Vec<(usize, String, Vec<String>, usize)>> {
    let tasks = evaluation::make_intrusion_tasks(&reps(topics), tasks_per_topic, seed).map_err(value_err)?;
    Ok(tasks.into_iter().map(|t| (t.task_id, t.topic_label, t.shown_words, t.intruder_index)).collect())
}

/// Fraction of answers naming the intruder. `key` maps task id to intruder index.
#[pyfunction]
fn score_intrusion(key: HashMap<usize, usize>, answers: BTreeMap<usize, usize>) -> PyResult<f64> {
    let tasks: Vec<evaluation::IntrusionTask> = key
        .into_iter()
        .map(|(task_id, intruder_index)| evaluation::IntrusionTask {
            task_id,
            topic_label: String::new(),
            shown_words: Vec::new(),
            intruder_index,
            seed: 0,
        })
        .collect();
    evaluation::score_intrusion(&tasks, &answers).map_err(value_err)
}

#[pyfunction]
fn parse_topic_list(text: &str) -> PyResult<Vec<String>> {
    llm::parse_topic_list(text).map(|a| a.labels).map_err(value_err)
}

/// Runs every stage for a config file; returns the artifact paths written.
#[pyfunction]
#[pyo3(signature = (config_path, backend = None, seed = None))]
fn run_pipeline(config_path: PathBuf, backend: Option<&str>, seed: Option<u64>) -> PyResult<Vec<PathBuf>> {
    let backend = match backend {
        None => None,
        Some("remote") => Some(BackendKind::Remote),
        Some("local") => Some(BackendKind::Local),
        Some("script") => Some(BackendKind::Script),
        Some("replay") => Some(BackendKind::Replay),
        Some(other) => return Err(value_err(format!("unknown backend '{other}'"))),
    };
    let pipeline_err = |e: pipeline::PipelineError| PyRuntimeError::new_err(format!("[exit {}] {e}", e.exit_code()));
    let cfg = pipeline::load_config(&config_path, &Overrides { backend, seed }).map_err(pipeline_err)?;
    pipeline::run_stages(&Stage::all(), &cfg).map_err(pipeline_err)
}

#[pymodule]
fn prompttopic(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(ctfidf, m)?)?;
    m.add_function(wrap_pyfunction!(top_words, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_wsm, m)?)?;
    m.add_function(wrap_pyfunction!(npmi, m)?)?;
    m.add_function(wrap_pyfunction!(topic_npmi, m)?)?;
    m.add_function(wrap_pyfunction!(topic_diversity, m)?)?;
    m.add_function(wrap_pyfunction!(make_intrusion_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(score_intrusion, m)?)?;
    m.add_function(wrap_pyfunction!(parse_topic_list, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
