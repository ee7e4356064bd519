//! Cluster-aware compression pipeline for document-level event relation
//! extraction.
//!
//! The crate turns a long document into a set of short, pair-focused
//! contexts before classifying event relations:
//!
//! 1. [`clustering`] groups sentences into intra-clusters and pairwise
//!    inter-clusters;
//! 2. [`summarizer`] compresses each cluster with a trainable extractive
//!    policy (or a pluggable abstractive backend), keeping event triggers;
//! 3. [`relation`] encodes a chosen context per event pair and scores the
//!    relation types;
//! 4. [`trainer`] fits the relation model with supervised updates and the
//!    summarization policy with a score-function gradient against a
//!    prediction + summary-quality reward;
//! 5. [`evaluator`] scores predictions overall, by pair distance, and across
//!    compression strategy ablations;
//! 6. [`llm`] runs the same strategies as few-shot prompts against a chat
//!    completion backend (HTTP or deterministic offline mock).
//!
//! [`corpus`] defines the document model and JSONL formats, and [`artifact`]
//! the metadata headers that chain derived files to their inputs.

pub mod artifact;
pub mod clustering;
pub mod corpus;
pub mod evaluator;
pub mod llm;
pub mod pipeline;
pub mod relation;
pub mod reward;
pub mod summarizer;
pub mod trainer;

pub use corpus::{
    Corpus, CorpusError, DistanceUnit, Document, Event, Mention, RelationInstance, Sentence,
    Split, Taxonomy, Violation,
};
