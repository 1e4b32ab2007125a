//! Query annotation: prompt a completion backend, parse the numbered
//! questions it returns, and assemble triplets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompletionBackend, CompletionParams, CompletionRequest, RequestKey};
use crate::corpus::{
    normalize_query, segment_sentences, AnnotatedTriplet, DocumentSummaryPair, QueryMode,
};
use crate::promptgen::{build_prompt_for, numbered_line, PromptError, PromptSet, PromptSpec};
use crate::taxonomy::classify_query;
use crate::tokenize::truncate_to_tokens;

/// Instruction that opens a zero-shot summarization prompt.
pub const ZERO_SHOT_INSTRUCTION: &str = "Summarize by answering the following questions:";

const QFS_QUESTION: &str = "question:\n ";
const QFS_CONTEXT: &str = " \n context:\n";

/// Input string for a query-focused summarizer:
/// `"question:\n <query> \n context:\n<document>"`.
pub fn build_qfs_input(query: &str, document: &str) -> Result<String, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError::EmptyInput("query"));
    }
    if document.trim().is_empty() {
        return Err(PromptError::EmptyInput("document"));
    }
    Ok(format!("{QFS_QUESTION}{query}{QFS_CONTEXT}{document}"))
}

/// Inverse of [`build_qfs_input`]. Splits at the first context delimiter, so
/// a query that itself contains `" \n context:\n"` does not round-trip.
pub fn split_qfs_input(input: &str) -> Option<(&str, &str)> {
    input.strip_prefix(QFS_QUESTION)?.split_once(QFS_CONTEXT)
}

/// Instruction, query, and document on consecutive lines. Applying it to its
/// own output nests the prompt.
pub fn zero_shot_summarize_prompt(query: &str, document: &str) -> Result<String, PromptError> {
    if query.trim().is_empty() {
        return Err(PromptError::EmptyInput("query"));
    }
    if document.trim().is_empty() {
        return Err(PromptError::EmptyInput("document"));
    }
    Ok(format!("{ZERO_SHOT_INSTRUCTION}\n{query}\n{document}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseMismatch {
    #[error("no numbered lines in completion")]
    NoQueries,
    #[error("expected {expected} queries, found {found}")]
    Count { expected: usize, found: usize },
    #[error("numbering jumps to {found} where {expected} was expected")]
    Gap { expected: usize, found: usize },
    #[error("query {number} is empty")]
    EmptyQuery { number: usize },
}

fn strip_answer_label(q: &str) -> &str {
    for label in ["Yes:", "No:", "yes:", "no:", "YES:", "NO:"] {
        if let Some(rest) = q.strip_prefix(label) {
            return rest.trim_start();
        }
    }
    q
}

/// Scans numbered lines, stopping at the first blank line after the list
/// has started. Non-numbered lines are ignored. Returns the contiguous
/// prefix and, if numbering broke, where.
fn scan_numbered(completion: &str, mode: QueryMode) -> (Vec<String>, Option<ParseMismatch>) {
    let mut out = Vec::new();
    for line in completion.lines() {
        if line.trim().is_empty() {
            if out.is_empty() {
                continue;
            }
            break;
        }
        let Some((n, text)) = numbered_line(line) else {
            continue;
        };
        let expected = out.len() + 1;
        if n != expected {
            return (out, Some(ParseMismatch::Gap { expected, found: n }));
        }
        let text = match mode {
            QueryMode::Yesno => strip_answer_label(text),
            QueryMode::Wh => text,
        };
        if text.is_empty() {
            return (out, Some(ParseMismatch::EmptyQuery { number: n }));
        }
        out.push(text.to_string());
    }
    (out, None)
}

/// Extracts `1.`, `2.`, ... lines from a completion. Yes/no answer labels
/// (`Yes:` / `No:`) are removed in yes/no mode.
pub fn parse_completion(
    completion: &str,
    expected_count: usize,
    mode: QueryMode,
) -> Result<Vec<String>, ParseMismatch> {
    let (queries, broken) = scan_numbered(completion, mode);
    if let Some(e) = broken {
        return Err(e);
    }
    if queries.len() != expected_count {
        return Err(ParseMismatch::Count {
            expected: expected_count,
            found: queries.len(),
        });
    }
    Ok(queries)
}

/// Like [`parse_completion`] but accepts any non-zero count.
pub fn parse_numbered(completion: &str, mode: QueryMode) -> Result<Vec<String>, ParseMismatch> {
    let (queries, broken) = scan_numbered(completion, mode);
    if let Some(e) = broken {
        return Err(e);
    }
    if queries.is_empty() {
        return Err(ParseMismatch::NoQueries);
    }
    Ok(queries)
}

/// Keeps the first `expected_count` contiguous queries when the completion
/// has at least that many.
fn repair(completion: &str, expected_count: usize, mode: QueryMode) -> Option<Vec<String>> {
    let (mut queries, _) = scan_numbered(completion, mode);
    if queries.len() >= expected_count {
        queries.truncate(expected_count);
        Some(queries)
    } else {
        None
    }
}

/// What happens when a completion does not parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Give up after the first attempt.
    Drop,
    /// Re-ask up to `retries` more times, then give up.
    #[default]
    RetryThenDrop,
    /// Truncate over-long numbered lists to the expected count; otherwise
    /// retry like `RetryThenDrop`.
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub retries: u32,
    pub policy: FailurePolicy,
    pub params: CompletionParams,
    /// Documents longer than this (shared tokenizer) are cut at the end
    /// before prompting.
    pub max_prompt_tokens: usize,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            policy: FailurePolicy::RetryThenDrop,
            params: CompletionParams::annotation(),
            max_prompt_tokens: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    ParseMismatch,
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub id: String,
    pub status: OutcomeStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplet: Option<AnnotatedTriplet>,
    pub attempts: u32,
    /// Last completion text, or the error body for backend failures.
    pub raw_completion: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repaired: bool,
}

impl AnnotationOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == OutcomeStatus::Ok
    }
}

fn assemble(pair: &DocumentSummaryPair, queries: Vec<String>, mode: QueryMode) -> AnnotatedTriplet {
    let queries: Vec<String> = queries.iter().map(|q| normalize_query(q)).collect();
    let query_types = queries.iter().map(|q| classify_query(q)).collect();
    AnnotatedTriplet {
        id: pair.id.clone(),
        document: pair.document.clone(),
        summary: pair.summary.clone(),
        queries,
        mode,
        query_types,
    }
}

/// Annotates one pair with a single prompt spec. `index` keys the backend
/// request so scripted mocks can address it.
pub fn annotate_pair<B: CompletionBackend + ?Sized>(
    index: usize,
    pair: &DocumentSummaryPair,
    spec: &PromptSpec,
    backend: &B,
    config: &AnnotatorConfig,
) -> Result<AnnotationOutcome, PromptError> {
    let summary = segment_sentences(&pair.summary);
    let (document, cut) = truncate_to_tokens(&pair.document, config.max_prompt_tokens);
    if cut {
        log::debug!(
            "{}: document truncated to {} tokens for prompting",
            pair.id,
            config.max_prompt_tokens
        );
    }
    let prompt = build_prompt_for(&document, &summary, pair.domain, spec)?;
    let expected = summary.len();
    let mode = spec.mode();
    let max_attempts = match config.policy {
        FailurePolicy::Drop => 1,
        _ => config.retries + 1,
    };

    let mut outcome = AnnotationOutcome {
        id: pair.id.clone(),
        status: OutcomeStatus::BackendError,
        triplet: None,
        attempts: 0,
        raw_completion: String::new(),
        error: None,
        repaired: false,
    };
    for attempt in 0..max_attempts {
        outcome.attempts = attempt + 1;
        let request = CompletionRequest {
            prompt: &prompt,
            params: &config.params,
            key: RequestKey::new(index, attempt),
        };
        match backend.complete(&request) {
            Ok(text) => {
                let parsed = parse_completion(&text, expected, mode);
                outcome.raw_completion = text;
                match parsed {
                    Ok(queries) => {
                        outcome.status = OutcomeStatus::Ok;
                        outcome.error = None;
                        outcome.triplet = Some(assemble(pair, queries, mode));
                        return Ok(outcome);
                    }
                    Err(e) => {
                        if config.policy == FailurePolicy::Repair {
                            if let Some(queries) = repair(&outcome.raw_completion, expected, mode) {
                                outcome.status = OutcomeStatus::Ok;
                                outcome.error = None;
                                outcome.repaired = true;
                                outcome.triplet = Some(assemble(pair, queries, mode));
                                return Ok(outcome);
                            }
                        }
                        log::debug!("{}: attempt {} did not parse: {e}", pair.id, attempt + 1);
                        outcome.status = OutcomeStatus::ParseMismatch;
                        outcome.error = Some(e.to_string());
                    }
                }
            }
            Err(e) => {
                log::debug!("{}: attempt {} backend error: {e}", pair.id, attempt + 1);
                outcome.status = OutcomeStatus::BackendError;
                outcome.raw_completion = e.audit_text();
                outcome.error = Some(e.to_string());
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub ok: usize,
    pub parse_mismatch: usize,
    pub backend_error: usize,
}

impl RunSummary {
    pub fn total(&self) -> usize {
        self.ok + self.parse_mismatch + self.backend_error
    }

    pub fn failures(&self) -> usize {
        self.parse_mismatch + self.backend_error
    }

    /// Failed share of the run; 0 for an empty run.
    pub fn failure_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.failures() as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRun {
    pub outcomes: Vec<AnnotationOutcome>,
    pub summary: RunSummary,
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Runs [`annotate_pair`] over a corpus with one prompt spec per domain.
pub struct Annotator<'a, B: ?Sized> {
    prompts: &'a PromptSet,
    backend: &'a B,
    config: AnnotatorConfig,
}

impl<'a, B: CompletionBackend + ?Sized> Annotator<'a, B> {
    pub fn new(prompts: &'a PromptSet, backend: &'a B, config: AnnotatorConfig) -> Self {
        Self {
            prompts,
            backend,
            config,
        }
    }

    pub fn config(&self) -> &AnnotatorConfig {
        &self.config
    }

    pub fn annotate_pair(&self, index: usize, pair: &DocumentSummaryPair) -> AnnotationOutcome {
        let spec = self.prompts.get(pair.domain);
        annotate_pair(index, pair, spec, self.backend, &self.config).unwrap_or_else(|e| {
            // only reachable for pairs with an empty summary
            AnnotationOutcome {
                id: pair.id.clone(),
                status: OutcomeStatus::ParseMismatch,
                triplet: None,
                attempts: 0,
                raw_completion: String::new(),
                error: Some(e.to_string()),
                repaired: false,
            }
        })
    }

    /// Annotates every pair with up to `parallelism` requests in flight.
    /// Outcomes come back in input order.
    pub fn annotate_corpus(
        &self,
        pairs: &[DocumentSummaryPair],
        parallelism: usize,
    ) -> Result<AnnotationRun, AnnotateError> {
        use rayon::prelude::*;

        if parallelism == 0 {
            return Err(AnnotateError::ZeroParallelism);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| AnnotateError::Pool(e.to_string()))?;
        let outcomes: Vec<AnnotationOutcome> = pool.install(|| {
            pairs
                .par_iter()
                .enumerate()
                .map(|(i, p)| self.annotate_pair(i, p))
                .collect()
        });
        let mut summary = RunSummary::default();
        for o in &outcomes {
            match o.status {
                OutcomeStatus::Ok => summary.ok += 1,
                OutcomeStatus::ParseMismatch => summary.parse_mismatch += 1,
                OutcomeStatus::BackendError => summary.backend_error += 1,
            }
        }
        Ok(AnnotationRun { outcomes, summary })
    }
}
