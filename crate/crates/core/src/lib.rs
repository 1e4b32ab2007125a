//! Build query-focused summarization data from generic summarization
//! corpora.
//!
//! The pipeline: [`corpus`] loads document/summary pairs, [`promptgen`]
//! builds one-shot prompts, [`annotate`] asks a [`backend`] for one question
//! per summary sentence, [`taxonomy`] and [`stats`] characterize the result,
//! [`unify`] rewrites non-question queries, [`compose`] builds multi-document
//! summaries, and [`rouge`] scores outputs.

pub mod annotate;
pub mod backend;
pub mod compose;
pub mod corpus;
pub mod promptgen;
pub mod report;
pub mod rouge;
pub mod stats;
pub mod taxonomy;
pub mod tokenize;
pub mod unify;

pub use annotate::{AnnotationOutcome, Annotator, AnnotatorConfig, FailurePolicy, OutcomeStatus};
pub use backend::{CompletionBackend, CompletionParams, HttpBackend, MockBackend};
pub use corpus::{AnnotatedTriplet, DocumentSummaryPair, Domain, QueryMode, SentenceList};
pub use promptgen::{PromptSet, PromptSpec};
pub use taxonomy::{QueryType, QueryTypeDistribution};
