//! Multi-document query-focused composition.
//!
//! Documents in a cluster are ranked by TF-IDF cosine similarity to the
//! query, each is summarized independently, and summaries are concatenated
//! in rank order. A summary joins only if its token overlap with what has
//! already been selected is below the threshold, and selection stops at the
//! token budget.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{build_qfs_input, zero_shot_summarize_prompt};
use crate::backend::{
    BackendError, CompletionBackend, CompletionParams, CompletionRequest, RequestKey,
};
use crate::promptgen::PromptError;
use crate::tokenize::{token_count, token_types, tokenize, truncate_to_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("cluster has no documents")]
    NoDocuments,
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("candidate text has no tokens")]
    EmptyCandidate,
    #[error("invalid composition config: {0}")]
    InvalidConfig(String),
    #[error("summarizing document {index}: {source}")]
    Backend {
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error("document {index}: {source}")]
    Prompt {
        index: usize,
        #[source]
        source: PromptError,
    },
}

/// Term statistics for one cluster of documents.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    term_freqs: Vec<HashMap<String, usize>>,
    doc_freqs: HashMap<String, usize>,
}

fn counts(tokens: Vec<String>) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

impl TfIdfIndex {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let term_freqs: Vec<_> = docs.iter().map(|d| counts(tokenize(d.as_ref()))).collect();
        let mut doc_freqs = HashMap::new();
        for tf in &term_freqs {
            for term in tf.keys() {
                *doc_freqs.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Self {
            term_freqs,
            doc_freqs,
        }
    }

    pub fn len(&self) -> usize {
        self.term_freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_freqs.is_empty()
    }

    /// `ln(N / df) + 1`, or `None` for terms outside the cluster.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = *self.doc_freqs.get(term)?;
        Some((self.len() as f64 / df as f64).ln() + 1.0)
    }

    fn weights<'t>(&self, tf: &'t HashMap<String, usize>) -> HashMap<&'t str, f64> {
        tf.iter()
            .filter_map(|(t, c)| self.idf(t).map(|idf| (t.as_str(), *c as f64 * idf)))
            .collect()
    }

    /// Cosine similarity of each document to the query. Query terms absent
    /// from the cluster are ignored; zero vectors score 0.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let q_tf = counts(tokenize(query));
        let q = self.weights(&q_tf);
        let q_norm = q.values().map(|w| w * w).sum::<f64>().sqrt();
        self.term_freqs
            .iter()
            .map(|tf| {
                let d = self.weights(tf);
                let d_norm = d.values().map(|w| w * w).sum::<f64>().sqrt();
                if q_norm == 0.0 || d_norm == 0.0 {
                    return 0.0;
                }
                let dot: f64 = q
                    .iter()
                    .map(|(t, w)| w * d.get(t).copied().unwrap_or(0.0))
                    .sum();
                dot / (q_norm * d_norm)
            })
            .collect()
    }
}

/// Document indices by descending relevance; ties keep input order.
pub fn rank_documents<S: AsRef<str>>(docs: &[S], query: &str) -> Vec<usize> {
    let scores = TfIdfIndex::new(docs).scores(query);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    order
}

/// Share of candidate tokens whose type already occurs in `selected`.
pub fn overlap_pct(candidate: &str, selected: &str) -> Result<f64, ComposeError> {
    let tokens = tokenize(candidate);
    if tokens.is_empty() {
        return Err(ComposeError::EmptyCandidate);
    }
    let seen = token_types(selected);
    let shared = tokens.iter().filter(|t| seen.contains(*t)).count();
    Ok(100.0 * shared as f64 / tokens.len() as f64)
}

/// What to do with the summary that would overflow the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overflow {
    /// Keep its leading whole tokens up to the budget.
    #[default]
    Truncate,
    /// Leave it out.
    Drop,
}

/// Prompt format sent to the summarizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizePrompt {
    /// `question:\n <query> \n context:\n<document>`
    #[default]
    Qfs,
    /// Instruction line, then query, then document.
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompositionConfig {
    /// Percent; a candidate joins only if its overlap is strictly below.
    pub overlap_threshold: f64,
    pub token_budget: usize,
    pub overflow: Overflow,
    pub prompt: SummarizePrompt,
    pub params: CompletionParams,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 50.0,
            token_budget: 250,
            overflow: Overflow::Truncate,
            prompt: SummarizePrompt::Qfs,
            params: CompletionParams::summarization(),
        }
    }
}

impl CompositionConfig {
    pub fn validate(&self) -> Result<(), ComposeError> {
        if !(0.0..=100.0).contains(&self.overlap_threshold) {
            return Err(ComposeError::InvalidConfig(format!(
                "overlap_threshold must be within [0, 100], got {}",
                self.overlap_threshold
            )));
        }
        if self.token_budget == 0 {
            return Err(ComposeError::InvalidConfig(
                "token_budget must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub summary: String,
    /// Original indices of the documents whose summaries were used, in
    /// selection order.
    pub selected_doc_indices: Vec<usize>,
    pub truncated: bool,
    pub ranking: Vec<usize>,
    /// Per-document summaries, by original index.
    pub candidates: Vec<String>,
}

/// Greedy selection over summaries already in rank order. `ranked` pairs
/// each summary with the document index it came from.
pub fn select_summaries(
    ranked: &[(usize, &str)],
    cfg: &CompositionConfig,
) -> Result<(String, Vec<usize>, bool), ComposeError> {
    cfg.validate()?;
    let mut pieces: Vec<String> = Vec::new();
    let mut selected = Vec::new();
    let mut total = 0;
    let mut truncated = false;
    for &(index, candidate) in ranked {
        if total >= cfg.token_budget {
            break;
        }
        let n = token_count(candidate);
        if n == 0 {
            continue;
        }
        if !selected.is_empty()
            && overlap_pct(candidate, &pieces.join(" "))? >= cfg.overlap_threshold
        {
            continue;
        }
        let piece = if total + n > cfg.token_budget {
            match cfg.overflow {
                Overflow::Drop => break,
                Overflow::Truncate => {
                    truncated = true;
                    truncate_to_tokens(candidate.trim(), cfg.token_budget - total).0
                }
            }
        } else {
            candidate.trim().to_string()
        };
        total += token_count(&piece);
        pieces.push(piece);
        selected.push(index);
        if truncated {
            break;
        }
    }
    Ok((pieces.join(" "), selected, truncated))
}

/// Ranks, summarizes each document (in parallel on the current rayon pool),
/// and composes. Document `i` is requested with key `(i, 0)`. The first
/// summarizer failure aborts the cluster.
pub fn compose_summary<B: CompletionBackend + ?Sized>(
    docs: &[String],
    query: &str,
    cfg: &CompositionConfig,
    backend: &B,
) -> Result<Composition, ComposeError> {
    use rayon::prelude::*;

    cfg.validate()?;
    if docs.is_empty() {
        return Err(ComposeError::NoDocuments);
    }
    if query.trim().is_empty() {
        return Err(ComposeError::EmptyQuery);
    }
    let ranking = rank_documents(docs, query);
    let candidates: Vec<String> = docs
        .par_iter()
        .enumerate()
        .map(|(index, doc)| {
            let prompt = match cfg.prompt {
                SummarizePrompt::Qfs => build_qfs_input(query, doc),
                SummarizePrompt::ZeroShot => zero_shot_summarize_prompt(query, doc),
            }
            .map_err(|source| ComposeError::Prompt { index, source })?;
            backend
                .complete(&CompletionRequest {
                    prompt: &prompt,
                    params: &cfg.params,
                    key: RequestKey::new(index, 0),
                })
                .map_err(|source| ComposeError::Backend { index, source })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;

    let ranked: Vec<(usize, &str)> = ranking
        .iter()
        .map(|&i| (i, candidates[i].as_str()))
        .collect();
    let (summary, selected_doc_indices, truncated) = select_summaries(&ranked, cfg)?;
    Ok(Composition {
        summary,
        selected_doc_indices,
        truncated,
        ranking,
        candidates,
    })
}

/// Input record: one cluster per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: String,
    pub query: String,
    pub documents: Vec<String>,
}

/// Output record: one composed summary per cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedRecord {
    pub cluster_id: String,
    pub summary: String,
    pub selected_doc_indices: Vec<usize>,
    pub truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Canned, Fallback, MockBackend, MockScript, ScriptEntry};

    fn scripted(summaries: &[&str]) -> MockBackend {
        MockBackend::from_script(MockScript {
            seed: 0,
            fallback: Fallback::Error,
            responses: summaries
                .iter()
                .enumerate()
                .map(|(i, s)| ScriptEntry {
                    request: i,
                    attempts: vec![Canned::Text(s.to_string())],
                })
                .collect(),
        })
    }

    fn docs(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("document number {i}")).collect()
    }

    #[test]
    fn single_document_ranks_first() {
        assert_eq!(rank_documents(&["anything"], "query"), vec![0]);
    }

    #[test]
    fn no_overlap_keeps_input_order() {
        assert_eq!(rank_documents(&["a b", "c d", "e f"], "zzz"), vec![0, 1, 2]);
    }

    #[test]
    fn hand_computed_ranking() {
        // N = 3. df: cat 2, dog 1, fish 1, bird 1.
        // idf(cat) = ln(1.5)+1, idf(dog) = idf(fish) = idf(bird) = ln(3)+1.
        // query "cat dog": doc1 "dog dog cat" shares both, doc0 "cat fish" one,
        // doc2 "bird" none.
        let d = ["cat fish", "dog dog cat", "bird"];
        assert_eq!(rank_documents(&d, "cat dog"), vec![1, 0, 2]);
        let idx = TfIdfIndex::new(&d);
        assert!((idx.idf("cat").unwrap() - (1.5f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(idx.idf("zebra"), None);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_pct("a b c", "a b c").unwrap(), 100.0);
        assert_eq!(overlap_pct("a b", "").unwrap(), 0.0);
        // the, fox shared; red novel -> 2 of 3
        assert!((overlap_pct("the red fox", "the fox ran").unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(overlap_pct("--", "x"), Err(ComposeError::EmptyCandidate));
    }

    #[test]
    fn one_doc_one_summary() {
        let c = compose_summary(
            &docs(1),
            "q",
            &CompositionConfig::default(),
            &scripted(&["S."]),
        )
        .unwrap();
        assert_eq!(c.summary, "S.");
        assert_eq!(c.selected_doc_indices, vec![0]);
        assert!(!c.truncated);
    }

    #[test]
    fn duplicate_summary_is_skipped() {
        let c = compose_summary(
            &docs(2),
            "q",
            &CompositionConfig::default(),
            &scripted(&["same words here", "same words here"]),
        )
        .unwrap();
        assert_eq!(c.summary, "same words here");
        assert_eq!(c.selected_doc_indices.len(), 1);
    }

    fn words(prefix: &str, n: usize) -> String {
        (0..n)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn budget_truncates_third_summary() {
        // 120 + 120 = 240 selected; 10 tokens left for the third.
        let s: Vec<String> = ["a", "b", "c"].iter().map(|p| words(p, 120)).collect();
        let refs: Vec<&str> = s.iter().map(String::as_str).collect();
        let c = compose_summary(
            &docs(3),
            "q",
            &CompositionConfig::default(),
            &scripted(&refs),
        )
        .unwrap();
        assert_eq!(token_count(&c.summary), 250);
        assert_eq!(c.selected_doc_indices, vec![0, 1, 2]);
        assert!(c.truncated);
        assert!(c.summary.ends_with(" c9"));

        let cfg = CompositionConfig {
            overflow: Overflow::Drop,
            ..CompositionConfig::default()
        };
        let c = compose_summary(&docs(3), "q", &cfg, &scripted(&refs)).unwrap();
        assert_eq!(token_count(&c.summary), 240);
        assert_eq!(c.selected_doc_indices, vec![0, 1]);
        assert!(!c.truncated);
    }

    #[test]
    fn backend_failure_names_document() {
        let b = MockBackend::from_script(MockScript {
            seed: 0,
            fallback: Fallback::Error,
            responses: vec![ScriptEntry {
                request: 0,
                attempts: vec![Canned::Text("ok".into())],
            }],
        });
        match compose_summary(&docs(2), "q", &CompositionConfig::default(), &b) {
            Err(ComposeError::Backend { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_is_validated() {
        let bad = CompositionConfig {
            overlap_threshold: 101.0,
            ..CompositionConfig::default()
        };
        assert!(matches!(
            compose_summary(&docs(1), "q", &bad, &scripted(&["x"])),
            Err(ComposeError::InvalidConfig(_))
        ));
        let bad = CompositionConfig {
            token_budget: 0,
            ..CompositionConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            compose_summary(&[], "q", &CompositionConfig::default(), &scripted(&[])),
            Err(ComposeError::NoDocuments)
        );
    }

    #[test]
    fn zero_shot_prompt_variant() {
        let cfg = CompositionConfig {
            prompt: SummarizePrompt::ZeroShot,
            ..CompositionConfig::default()
        };
        let c = compose_summary(
            &["Snow fell. Sun rose.".to_string()],
            "snow",
            &cfg,
            &MockBackend::synthetic(1),
        )
        .unwrap();
        assert!(c.summary.contains("Snow fell."));
    }
}
