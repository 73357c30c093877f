//! Document ingestion and preprocessing.
//!
//! Preprocessing runs in a fixed order: lowercase, punctuation stripping,
//! whitespace tokenization, stopword removal, optional lemmatization, then the
//! minimum-length and stopword filters. Running the pipeline again over its own output
//! (tokens joined by spaces) is a no-op.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into serialized corpus artifacts.
pub const CORPUS_ARTIFACT_VERSION: u32 = 1;

static ENGLISH_STOPWORDS: &str = include_str!("../data/english_stopwords.txt");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus is empty after preprocessing")]
    Empty,
    #[error("invalid preprocessing config: {0}")]
    Config(String),
}

/// Input layout of a raw document collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One document per line.
    PlainLines,
    /// One JSON object per line with a `text` field and an optional `label`.
    JsonLines,
}

/// The fixed English stopword list shipped with the crate.
pub fn english_stopwords() -> &'static BTreeSet<String> {
    static LIST: OnceLock<BTreeSet<String>> = OnceLock::new();
    LIST.get_or_init(|| {
        ENGLISH_STOPWORDS
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(str::to_owned)
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub stopword_list: BTreeSet<String>,
    pub lemmatize: bool,
    pub min_token_length: usize,
}

impl Default for PreprocessConfig {
    /// Lowercasing and punctuation stripping on, no stopwords, no lemmatization.
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            stopword_list: BTreeSet::new(),
            lemmatize: false,
            min_token_length: 1,
        }
    }
}

impl PreprocessConfig {
    /// Default flags with the shipped English stopword list.
    pub fn english() -> Self {
        Self {
            stopword_list: english_stopwords().clone(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_token_length < 1 {
            return Err(CorpusError::Config("min_token_length must be >= 1".into()));
        }
        Ok(())
    }

    /// Runs the full preprocessing pipeline over one raw text.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_owned()
        };
        let text: String = if self.strip_punctuation {
            text.chars()
                .map(|c| if is_punctuation(c) { ' ' } else { c })
                .collect()
        } else {
            text
        };
        // Stopwords go before lemmatization, and again after it because a
        // lemma can itself be a stopword ("ours" -> "our").
        text.split_whitespace()
            .filter(|tok| !self.stopword_list.contains(*tok))
            .map(|tok| {
                if self.lemmatize {
                    lemmatize(tok)
                } else {
                    tok.to_owned()
                }
            })
            .filter(|tok| tok.chars().count() >= self.min_token_length)
            .filter(|tok| !self.stopword_list.contains(tok))
            .collect()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
                | '\u{00AB}' | '\u{00BB}' | '\u{00BF}' | '\u{00A1}'
        )
}

/// Rule-based plural folding. It is a fixed point on its own output.
///
/// This is a light approximation of dictionary lemmatization: it only folds
/// regular English plurals (`-ies`, `-sses`, `-s`).
pub fn lemmatize(token: &str) -> String {
    let n = token.chars().count();
    if n > 4 && token.ends_with("ies") {
        return format!("{}y", &token[..token.len() - 3]);
    }
    if token.ends_with("sses") {
        return token[..token.len() - 2].to_owned();
    }
    if n > 3
        && token.ends_with('s')
        && !token.ends_with("ss")
        && !token.ends_with("us")
        && !token.ends_with("is")
    {
        return token[..token.len() - 1].to_owned();
    }
    token.to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: usize,
    pub raw_text: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Document {
    /// Space-joined token stream, the text shown to the LLM.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Token to id, ids assigned in order of first appearance.
    pub vocabulary: BTreeMap<String, usize>,
    pub source_name: String,
}

#[derive(Serialize, Deserialize)]
struct CorpusArtifact {
    version: u32,
    source_name: String,
    documents: Vec<Document>,
}

#[derive(Deserialize)]
struct JsonRecord {
    text: Option<String>,
    #[serde(default)]
    label: Option<serde_json::Value>,
}

impl Corpus {
    /// Builds a corpus from already-preprocessed documents, assigning ids by
    /// position and rebuilding the vocabulary.
    pub fn from_documents(source_name: impl Into<String>, mut documents: Vec<Document>) -> Self {
        for (i, doc) in documents.iter_mut().enumerate() {
            doc.id = i;
        }
        let vocabulary = build_vocabulary(&documents);
        Self {
            documents,
            vocabulary,
            source_name: source_name.into(),
        }
    }

    /// Preprocesses raw texts into a corpus.
    pub fn from_texts<S: AsRef<str>>(
        source_name: impl Into<String>,
        texts: &[S],
        cfg: &PreprocessConfig,
    ) -> Result<Self, CorpusError> {
        cfg.validate()?;
        let docs = texts
            .iter()
            .enumerate()
            .map(|(id, t)| Document {
                id,
                raw_text: t.as_ref().to_owned(),
                tokens: cfg.tokenize(t.as_ref()),
                label: None,
            })
            .collect();
        let corpus = Self::from_documents(source_name, docs);
        corpus.ensure_non_empty()?;
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Document> {
        self.documents.get(id)
    }

    fn ensure_non_empty(&self) -> Result<(), CorpusError> {
        if self.documents.iter().all(|d| d.tokens.is_empty()) {
            return Err(CorpusError::Empty);
        }
        Ok(())
    }

    /// Versioned JSON artifact with sorted keys.
    pub fn to_json(&self) -> String {
        let artifact = CorpusArtifact {
            version: CORPUS_ARTIFACT_VERSION,
            source_name: self.source_name.clone(),
            documents: self.documents.clone(),
        };
        crate::artifact::to_canonical_json(&artifact)
    }

    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let artifact: CorpusArtifact = serde_json::from_str(json).map_err(|e| CorpusError::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        if artifact.version != CORPUS_ARTIFACT_VERSION {
            return Err(CorpusError::Format {
                line: 1,
                message: format!("unsupported corpus artifact version {}", artifact.version),
            });
        }
        Ok(Self::from_documents(artifact.source_name, artifact.documents))
    }
}

fn build_vocabulary(documents: &[Document]) -> BTreeMap<String, usize> {
    let mut vocab = BTreeMap::new();
    for tok in documents.iter().flat_map(|d| d.tokens.iter()) {
        let next = vocab.len();
        vocab.entry(tok.clone()).or_insert(next);
    }
    vocab
}

/// Reads and preprocesses a document collection.
pub fn ingest(path: &Path, format: InputFormat, cfg: &PreprocessConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let source_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut documents = Vec::new();
    match format {
        InputFormat::PlainLines => {
            for line in content.lines() {
                documents.push(Document {
                    id: documents.len(),
                    raw_text: line.to_owned(),
                    tokens: cfg.tokenize(line),
                    label: None,
                });
            }
        }
        InputFormat::JsonLines => {
            for (idx, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: JsonRecord =
                    serde_json::from_str(line).map_err(|e| CorpusError::Format {
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                let text = record.text.ok_or_else(|| CorpusError::Format {
                    line: idx + 1,
                    message: "record has no \"text\" field".into(),
                })?;
                let label = record.label.and_then(|v| match v {
                    serde_json::Value::String(s) => Some(s),
                    serde_json::Value::Null => None,
                    other => Some(other.to_string()),
                });
                documents.push(Document {
                    id: documents.len(),
                    tokens: cfg.tokenize(&text),
                    raw_text: text,
                    label,
                });
            }
        }
    }

    let corpus = Corpus::from_documents(source_name, documents);
    corpus.ensure_non_empty()?;
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub size: usize,
    /// Mean token count after preprocessing.
    pub avg_tokens: f64,
    /// Mean whitespace-separated word count of the raw text.
    pub avg_raw_words: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let size = corpus.documents.len();
    if size == 0 {
        return CorpusStats {
            size,
            avg_tokens: 0.0,
            avg_raw_words: 0.0,
        };
    }
    let tokens: usize = corpus.documents.iter().map(|d| d.tokens.len()).sum();
    let raw: usize = corpus
        .documents
        .iter()
        .map(|d| d.raw_text.split_whitespace().count())
        .sum();
    CorpusStats {
        size,
        avg_tokens: tokens as f64 / size as f64,
        avg_raw_words: raw as f64 / size as f64,
    }
}
