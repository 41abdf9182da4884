//! Dataset-pruning and evaluation toolkit for Text2Cypher corpora.
//!
//! Profiles ground-truth Cypher queries, selects hard-example subsets with
//! five selection strategies plus two baselines, and scores model-generated
//! queries with translation-based (Google-BLEU, Exact Match) and
//! execution-based metrics.

pub mod config;
pub mod dataset;
pub mod execution;
pub mod lexer;
pub mod metrics;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod selection;
