//! Reducing generated topics to a target count.
//!
//! Two strategies operate on a [`TopicState`]:
//!
//! - prompt-based matching ([`collapse_pbm`]): the least frequent topic is
//!   offered to the LLM together with the more frequent ones; it is merged into
//!   the named topic or, failing that, into the `miscellaneous` bucket;
//! - word-similarity matching ([`collapse_wsm`]): the pair of topics whose top
//!   c-TF-IDF words overlap most is merged, scores are recomputed, repeat.
//!
//! [`compress_to_g`] runs PBM down to an intermediate count so WSM has fewer
//! topics to compare.

mod ctfidf;
mod pbm;
mod state;
mod wsm;

use thiserror::Error;

use crate::llm::LlmError;

pub use ctfidf::{compute_ctfidf, ctfidf_score, top_words, CTfIdfModel};
pub use pbm::{collapse_pbm, compress_to_g, render_pbm_prompt, DEFAULT_PBM_TEMPLATE};
pub use state::{CollapseConfig, CollapseMethod, MergeMethod, MergeStep, TopicState, TOPIC_STATE_VERSION};
pub use wsm::{collapse_wsm, wsm_similarity};

#[derive(Debug, Error)]
pub enum CollapseError {
    #[error("invalid collapse config: {0}")]
    Config(String),
    #[error("topic state references document {0}, which is not in the corpus")]
    UnknownDocument(usize),
    #[error("unknown topic label '{0}'")]
    UnknownLabel(String),
    #[error("{0}")]
    Domain(String),
    #[error("invalid merge: {0}")]
    InvalidMerge(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("topic artifact: {0}")]
    Artifact(String),
}
