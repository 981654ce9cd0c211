//! Batch toolkit for document-identifier indexing and citation evaluation.
//!
//! The pipeline ingests a raw document corpus, assigns globally unique
//! human-readable titles, and emits identifier-annotated continual-
//! pretraining data three ways: passive windows, entity-anchored forward QA
//! (identifier → facts), and cross-document backward instruction-answer
//! pairs (facts → identifiers). The evaluation side parses cited answers,
//! computes short- and long-form citation precision/recall, runs doc-ID
//! memorization probes and title-distinctiveness analysis, and simulates the
//! internal/external citation spectrum under varying retrieval quality.
//! All model-dependent steps go through pluggable clients with deterministic
//! seeded mocks, so everything runs offline.

pub mod artifact;
pub mod backward;
pub mod bm25;
pub mod cite;
pub mod config;
pub mod container;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod forward;
pub mod hybrid;
pub mod model;
pub mod passive;
pub mod prompt;
pub mod records;
pub mod text;
pub mod token;
pub mod trie;

pub use error::{Error, Result};
