//! Query unification: rewrite topic words, phrases, and instructions as
//! natural questions.
//!
//! The raw query is handed to a query generator as if it were the summary of
//! the document; the generator's question replaces it verbatim. A fixed
//! template rewrite is kept alongside for ablation runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{build_qfs_input, parse_numbered};
use crate::backend::{
    BackendError, CompletionBackend, CompletionParams, CompletionRequest, RequestKey,
};
use crate::corpus::{normalize_query, segment_sentences, QueryMode, SentenceList};
use crate::promptgen::{build_prompt_for, PromptError, PromptSpec};
use crate::rouge::RougeScores;
use crate::tokenize::{mean, truncate_to_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("generator returned no text")]
    EmptyGeneration,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

/// Produces a question from a document and a pseudo-summary.
pub trait QueryGenerator: Send + Sync {
    fn identity(&self) -> String;

    fn generate_query(
        &self,
        document: &str,
        pseudo_summary: &str,
        key: RequestKey,
    ) -> Result<String, UnifyError>;
}

/// Query generator built on a completion backend and the one-shot
/// annotation prompt, with the raw query standing in for the summary.
pub struct PromptedQueryGenerator<B> {
    backend: B,
    spec: PromptSpec,
    params: CompletionParams,
    max_prompt_tokens: usize,
}

impl<B: CompletionBackend> PromptedQueryGenerator<B> {
    pub fn new(backend: B, spec: PromptSpec) -> Self {
        Self {
            backend,
            spec,
            params: CompletionParams::annotation(),
            max_prompt_tokens: 3000,
        }
    }

    pub fn with_params(mut self, params: CompletionParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_max_prompt_tokens(mut self, n: usize) -> Self {
        self.max_prompt_tokens = n;
        self
    }
}

impl<B: CompletionBackend> QueryGenerator for PromptedQueryGenerator<B> {
    fn identity(&self) -> String {
        format!("prompted({})", self.backend.identity())
    }

    fn generate_query(
        &self,
        document: &str,
        pseudo_summary: &str,
        key: RequestKey,
    ) -> Result<String, UnifyError> {
        let mut summary = segment_sentences(pseudo_summary);
        if summary.is_empty() {
            summary =
                SentenceList::new([pseudo_summary]).map_err(|_| UnifyError::EmptyInput("query"))?;
        }
        let (document, _) = truncate_to_tokens(document, self.max_prompt_tokens);
        let prompt = build_prompt_for(&document, &summary, self.spec.domain(), &self.spec)?;
        Ok(self.backend.complete(&CompletionRequest {
            prompt: &prompt,
            params: &self.params,
            key,
        })?)
    }
}

/// Rewrites `raw_query` as one or more questions (one per line) using the
/// generator. Numbered output is split into lines; answer labels are
/// dropped; every line ends with `?`.
pub fn unify_query<G: QueryGenerator + ?Sized>(
    document: &str,
    raw_query: &str,
    generator: &G,
    key: RequestKey,
) -> Result<String, UnifyError> {
    if document.trim().is_empty() {
        return Err(UnifyError::EmptyInput("document"));
    }
    if raw_query.trim().is_empty() {
        return Err(UnifyError::EmptyInput("query"));
    }
    let raw = generator.generate_query(document, raw_query, key)?;
    let lines = match parse_numbered(&raw, QueryMode::Yesno) {
        Ok(qs) => qs,
        Err(_) => vec![raw.trim().to_string()],
    };
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(UnifyError::EmptyGeneration);
    }
    Ok(lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| normalize_query(l))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateStyle {
    /// Topic words or phrases.
    Newts,
    /// Imperative instructions.
    Duc,
}

const DUC_VERBS: [(&str, &str); 3] = [
    ("describe", "What is"),
    ("identify", "What are"),
    ("discuss", "What about"),
];

fn duc_sentence(sentence: &str) -> String {
    let s = sentence.trim();
    let body = s.trim_end_matches(['.', '!', '?']).trim_end();
    let rewritten = match body.split_once(char::is_whitespace) {
        Some((verb, rest)) => DUC_VERBS
            .iter()
            .find(|(v, _)| verb.eq_ignore_ascii_case(v))
            .map_or_else(
                || body.to_string(),
                |(_, lead)| format!("{lead} {}", rest.trim_start()),
            ),
        None => body.to_string(),
    };
    format!("{rewritten}?")
}

/// Hand-written rewrite of a raw query into question form.
pub fn template_fallback(raw_query: &str, style: TemplateStyle) -> Result<String, UnifyError> {
    let raw = raw_query.trim();
    if raw.is_empty() {
        return Err(UnifyError::EmptyInput("query"));
    }
    Ok(match style {
        TemplateStyle::Newts => {
            let topic = raw.trim_end_matches(['.', '!', '?']).trim_end();
            format!("What does the article say about {topic}?")
        }
        TemplateStyle::Duc => segment_sentences(raw)
            .iter()
            .map(|s| duc_sentence(s))
            .collect::<Vec<_>>()
            .join(" "),
    })
}

/// How the raw queries of a dataset are phrased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryFormat {
    /// Already a natural question; passed through.
    #[default]
    Natural,
    Words,
    Phrases,
    Sentence,
    Instruction,
}

impl QueryFormat {
    pub fn needs_unification(self) -> bool {
        self != QueryFormat::Natural
    }
}

/// Unifies many queries with up to `parallelism` generator calls at once.
/// Results are in input order; item `i` uses request key `(i, 0)`.
pub fn unify_corpus<G: QueryGenerator + ?Sized>(
    items: &[(String, String)],
    generator: &G,
    parallelism: usize,
) -> Result<Vec<Result<String, UnifyError>>, UnifyError> {
    use rayon::prelude::*;

    if parallelism == 0 {
        return Err(UnifyError::ZeroParallelism);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| UnifyError::Backend(BackendError::Transport(e.to_string())))?;
    Ok(pool.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(i, (doc, q))| unify_query(doc, q, generator, RequestKey::new(i, 0)))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationItem {
    pub id: String,
    pub document: String,
    pub raw_query: String,
    pub reference: String,
}

/// F1 differences, generated minus template.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct F1Delta {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub id: String,
    pub generated_query: String,
    pub template_query: String,
    pub generated: RougeScores,
    pub template: RougeScores,
    pub delta: F1Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub mean_delta: F1Delta,
}

/// Summarizes each item twice, once with the generated question and once
/// with the template question, and reports paired ROUGE differences.
///
/// Summarizer request keys: item `2i` for the generated path, `2i + 1` for
/// the template path.
pub fn run_ablation<G, S>(
    items: &[AblationItem],
    generator: &G,
    summarizer: &S,
    style: TemplateStyle,
    params: &CompletionParams,
) -> Result<AblationReport, UnifyError>
where
    G: QueryGenerator + ?Sized,
    S: CompletionBackend + ?Sized,
{
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let generated_query = unify_query(
            &item.document,
            &item.raw_query,
            generator,
            RequestKey::new(i, 0),
        )?;
        let template_query = template_fallback(&item.raw_query, style)?;
        let summarize = |q: &str, slot: usize| -> Result<String, UnifyError> {
            let prompt = build_qfs_input(q, &item.document)?;
            Ok(summarizer.complete(&CompletionRequest {
                prompt: &prompt,
                params,
                key: RequestKey::new(slot, 0),
            })?)
        };
        let generated = RougeScores::compute(&summarize(&generated_query, 2 * i)?, &item.reference);
        let template =
            RougeScores::compute(&summarize(&template_query, 2 * i + 1)?, &item.reference);
        rows.push(AblationRow {
            id: item.id.clone(),
            generated_query,
            template_query,
            delta: F1Delta {
                rouge1: generated.rouge1.f1 - template.rouge1.f1,
                rouge2: generated.rouge2.f1 - template.rouge2.f1,
                rouge_l: generated.rouge_l.f1 - template.rouge_l.f1,
            },
            generated,
            template,
        });
    }
    let col = |f: fn(&F1Delta) -> f64| {
        mean(&rows.iter().map(|r| f(&r.delta)).collect::<Vec<_>>()).unwrap_or_default()
    };
    let mean_delta = F1Delta {
        rouge1: col(|d| d.rouge1),
        rouge2: col(|d| d.rouge2),
        rouge_l: col(|d| d.rouge_l),
    };
    Ok(AblationReport { rows, mean_delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::corpus::Domain;
    use crate::taxonomy::classify_query;

    /// Echoes the pseudo-summary as a question.
    struct Echo;

    impl QueryGenerator for Echo {
        fn identity(&self) -> String {
            "echo".into()
        }

        fn generate_query(&self, _d: &str, s: &str, _k: RequestKey) -> Result<String, UnifyError> {
            Ok(format!("{s}?"))
        }
    }

    struct Fixed(&'static str);

    impl QueryGenerator for Fixed {
        fn identity(&self) -> String {
            "fixed".into()
        }

        fn generate_query(&self, _d: &str, _s: &str, _k: RequestKey) -> Result<String, UnifyError> {
            Ok(self.0.to_string())
        }
    }

    #[test]
    fn echo_generator_appends_question_mark() {
        let q = unify_query("doc", "winter temperatures", &Echo, RequestKey::default()).unwrap();
        assert_eq!(q, "winter temperatures?");
    }

    #[test]
    fn numbered_output_becomes_lines() {
        let q = unify_query(
            "doc",
            "x",
            &Fixed("1. Yes: Is it cold?\n2. What falls"),
            RequestKey::default(),
        )
        .unwrap();
        assert_eq!(q, "Is it cold?\nWhat falls?");
    }

    #[test]
    fn empty_generation_is_an_error() {
        assert_eq!(
            unify_query("doc", "x", &Fixed("  \n"), RequestKey::default()),
            Err(UnifyError::EmptyGeneration)
        );
        assert_eq!(
            unify_query("", "x", &Echo, RequestKey::default()),
            Err(UnifyError::EmptyInput("document"))
        );
        assert_eq!(
            unify_query("d", " ", &Echo, RequestKey::default()),
            Err(UnifyError::EmptyInput("query"))
        );
    }

    #[test]
    fn topic_words_through_prompted_generator() {
        let generator = PromptedQueryGenerator::new(
            MockBackend::synthetic(5),
            PromptSpec::builtin(Domain::News, QueryMode::Wh),
        );
        let raw =
            "snow, weather, cold, winter, temperatures, conditions, hot, morning, expected, parts";
        let q = unify_query(
            "Snow is expected later. It will be cold.",
            raw,
            &generator,
            RequestKey::default(),
        )
        .unwrap();
        assert!(!q.is_empty() && q.ends_with('?'));
        assert_eq!(q.lines().count(), 1);
        let _ = classify_query(&q);
    }

    #[test]
    fn instruction_query_through_prompted_generator() {
        let generator = PromptedQueryGenerator::new(
            MockBackend::synthetic(5),
            PromptSpec::builtin(Domain::News, QueryMode::Wh),
        );
        let raw = "Describe the state of teaching art and music in public schools around the world. Indicate problems, progress and failures.";
        let q = unify_query(
            "Schools cut arts funding.",
            raw,
            &generator,
            RequestKey::default(),
        )
        .unwrap();
        assert_eq!(q.lines().count(), 2);
        assert!(q.lines().all(|l| l.ends_with('?')));
    }

    #[test]
    fn templates() {
        assert_eq!(
            template_fallback("snow is expected later", TemplateStyle::Newts).unwrap(),
            "What does the article say about snow is expected later?"
        );
        // Identify -> What are; terminal period -> ?
        assert_eq!(
            template_fallback(
                "Identify computer viruses detected worldwide.",
                TemplateStyle::Duc
            )
            .unwrap(),
            "What are computer viruses detected worldwide?"
        );
        assert_eq!(
            template_fallback(
                "Describe the state of teaching art. Indicate problems.",
                TemplateStyle::Duc
            )
            .unwrap(),
            "What is the state of teaching art? Indicate problems?"
        );
        assert_eq!(
            template_fallback("discuss tariffs", TemplateStyle::Duc).unwrap(),
            "What about tariffs?"
        );
        assert_eq!(
            template_fallback("", TemplateStyle::Duc),
            Err(UnifyError::EmptyInput("query"))
        );
    }

    #[test]
    fn corpus_unification_keeps_order() {
        let items: Vec<_> = (0..6)
            .map(|i| ("doc".to_string(), format!("topic {i}")))
            .collect();
        let out = unify_corpus(&items, &Echo, 3).unwrap();
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap(), &format!("topic {i}?"));
        }
        assert_eq!(
            unify_corpus(&items, &Echo, 0).unwrap_err(),
            UnifyError::ZeroParallelism
        );
    }

    #[test]
    fn ablation_reports_paired_deltas() {
        let items = vec![AblationItem {
            id: "n1".into(),
            document:
                "Snow fell in the north. Markets rallied. Cold weather lingered in the morning."
                    .into(),
            raw_query: "snow, cold, morning".into(),
            reference: "Snow fell in the north. Cold weather lingered in the morning.".into(),
        }];
        let generator = PromptedQueryGenerator::new(
            MockBackend::synthetic(9),
            PromptSpec::builtin(Domain::News, QueryMode::Wh),
        );
        let summarizer = MockBackend::synthetic(9);
        let r = run_ablation(
            &items,
            &generator,
            &summarizer,
            TemplateStyle::Newts,
            &CompletionParams::summarization(),
        )
        .unwrap();
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert_eq!(
            row.template_query,
            "What does the article say about snow, cold, morning?"
        );
        assert!(
            (row.delta.rouge1 - (row.generated.rouge1.f1 - row.template.rouge1.f1)).abs() < 1e-15
        );
        assert_eq!(r.mean_delta, row.delta);
    }

    #[test]
    fn query_format_tags() {
        assert!(!QueryFormat::Natural.needs_unification());
        assert!(QueryFormat::Words.needs_unification());
        let f: QueryFormat = serde_json::from_str("\"instruction\"").unwrap();
        assert_eq!(f, QueryFormat::Instruction);
    }
}
