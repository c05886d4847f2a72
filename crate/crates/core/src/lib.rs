//! Measuring racial representation in news images and article text.
//!
//! The crate covers corpus ingestion from archived front pages, face-record
//! handling, a two-space SVM race classifier, LLM-backed text annotation,
//! agreement metrics and the statistical tests behind the final report.

pub mod annotate;
pub mod faces;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod special;
pub mod stats;
pub mod svm;
pub mod synth;
pub mod types;
