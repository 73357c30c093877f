//! Topic modeling by prompting an LLM for per-document topics, collapsing them
//! to a target count and describing each with c-TF-IDF words.

pub mod artifact;
pub mod collapse;
pub mod corpus;
pub mod evaluation;
pub mod generation;
pub mod llm;
pub mod representation;
pub mod pipeline;
