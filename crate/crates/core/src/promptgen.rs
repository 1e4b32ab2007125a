//! One-shot prompts for query generation.
//!
//! A prompt is the instruction, one worked example (document, numbered
//! summary, numbered questions), then the target document and its numbered
//! summary, ending with the questions label so the backend continues with
//! `1. `. Numbering each summary sentence and each question on its own line
//! is what ties every query to exactly one summary sentence.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{segment_sentences, DocumentSummaryPair, Domain, QueryMode, SentenceList};

pub const WH_INSTRUCTION: &str =
    "For each summary, write a general question about the article that can be answered by it";
pub const YESNO_INSTRUCTION: &str =
    "For each summary, write a binary question about the article that can be answered by it";

const NEWS_FIXTURE: &str = include_str!("../fixtures/oneshot_news.json");
const DIALOGUE_FIXTURE: &str = include_str!("../fixtures/oneshot_dialogue.json");

pub fn default_instruction(mode: QueryMode) -> &'static str {
    match mode {
        QueryMode::Wh => WH_INSTRUCTION,
        QueryMode::Yesno => YESNO_INSTRUCTION,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("cannot number an empty sentence list")]
    EmptySentences,
    #[error("{which} has no sentences")]
    EmptySummary { which: &'static str },
    #[error("prompt example is for {example} but the input is {input}")]
    DomainMismatch { example: Domain, input: Domain },
    #[error("prompt example is for {example} queries but the spec mode is {spec}")]
    ModeMismatch { example: QueryMode, spec: QueryMode },
    #[error("example has {summary} summary sentences but {queries} queries")]
    ExampleShape { summary: usize, queries: usize },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("example fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

/// Section headings placed before each block of the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionLabels {
    pub article: String,
    pub dialogue: String,
    pub summary: String,
    pub questions: String,
}

impl Default for SectionLabels {
    fn default() -> Self {
        Self {
            article: "Article:\n".into(),
            dialogue: "Dialogue:\n".into(),
            summary: "Summary:\n".into(),
            questions: "Questions:\n".into(),
        }
    }
}

impl SectionLabels {
    pub fn document(&self, domain: Domain) -> &str {
        match domain {
            Domain::News => &self.article,
            Domain::Dialogue => &self.dialogue,
        }
    }
}

/// A worked example with both question styles, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleFixture {
    pub domain: Domain,
    pub document: String,
    pub summary_sentences: SentenceList,
    pub wh_queries: SentenceList,
    pub yesno_queries: SentenceList,
}

impl ExampleFixture {
    pub fn builtin(domain: Domain) -> Self {
        let raw = match domain {
            Domain::News => NEWS_FIXTURE,
            Domain::Dialogue => DIALOGUE_FIXTURE,
        };
        serde_json::from_str(raw).expect("built-in one-shot fixture is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let fail = |message: String| PromptError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| fail(e.to_string()))
    }

    pub fn for_mode(&self, mode: QueryMode) -> Result<OneShotExample, PromptError> {
        let queries = match mode {
            QueryMode::Wh => &self.wh_queries,
            QueryMode::Yesno => &self.yesno_queries,
        };
        OneShotExample::new(
            self.document.clone(),
            self.summary_sentences.clone(),
            queries.clone(),
            self.domain,
            mode,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneShotExample {
    document: String,
    summary_sentences: SentenceList,
    query_sentences: SentenceList,
    domain: Domain,
    mode: QueryMode,
}

impl OneShotExample {
    pub fn new(
        document: String,
        summary_sentences: SentenceList,
        query_sentences: SentenceList,
        domain: Domain,
        mode: QueryMode,
    ) -> Result<Self, PromptError> {
        if summary_sentences.len() != query_sentences.len() {
            return Err(PromptError::ExampleShape {
                summary: summary_sentences.len(),
                queries: query_sentences.len(),
            });
        }
        if summary_sentences.is_empty() {
            return Err(PromptError::EmptySummary {
                which: "example summary",
            });
        }
        Ok(Self {
            document,
            summary_sentences,
            query_sentences,
            domain,
            mode,
        })
    }

    pub fn document(&self) -> &str {
        &self.document
    }

    pub fn summary_sentences(&self) -> &SentenceList {
        &self.summary_sentences
    }

    pub fn query_sentences(&self) -> &SentenceList {
        &self.query_sentences
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn mode(&self) -> QueryMode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    instruction: String,
    example: OneShotExample,
    labels: SectionLabels,
}

impl PromptSpec {
    /// Uses the standard instruction for the example's mode.
    pub fn new(example: OneShotExample) -> Self {
        Self {
            instruction: default_instruction(example.mode).to_string(),
            example,
            labels: SectionLabels::default(),
        }
    }

    /// The built-in example for `domain` in `mode`.
    pub fn builtin(domain: Domain, mode: QueryMode) -> Self {
        let example = ExampleFixture::builtin(domain)
            .for_mode(mode)
            .expect("built-in fixture has matching counts");
        Self::new(example)
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = instruction.into();
        self
    }

    pub fn with_labels(mut self, labels: SectionLabels) -> Self {
        self.labels = labels;
        self
    }

    pub fn mode(&self) -> QueryMode {
        self.example.mode
    }

    pub fn domain(&self) -> Domain {
        self.example.domain
    }

    pub fn instruction(&self) -> &str {
        &self.instruction
    }

    pub fn example(&self) -> &OneShotExample {
        &self.example
    }

    pub fn labels(&self) -> &SectionLabels {
        &self.labels
    }
}

/// A spec for each domain, all in the same mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    news: PromptSpec,
    dialogue: PromptSpec,
}

impl PromptSet {
    pub fn new(news: PromptSpec, dialogue: PromptSpec) -> Result<Self, PromptError> {
        for (spec, expected) in [(&news, Domain::News), (&dialogue, Domain::Dialogue)] {
            if spec.domain() != expected {
                return Err(PromptError::DomainMismatch {
                    example: spec.domain(),
                    input: expected,
                });
            }
        }
        if news.mode() != dialogue.mode() {
            return Err(PromptError::ModeMismatch {
                example: dialogue.mode(),
                spec: news.mode(),
            });
        }
        Ok(Self { news, dialogue })
    }

    pub fn builtin(mode: QueryMode) -> Self {
        Self {
            news: PromptSpec::builtin(Domain::News, mode),
            dialogue: PromptSpec::builtin(Domain::Dialogue, mode),
        }
    }

    pub fn mode(&self) -> QueryMode {
        self.news.mode()
    }

    pub fn get(&self, domain: Domain) -> &PromptSpec {
        match domain {
            Domain::News => &self.news,
            Domain::Dialogue => &self.dialogue,
        }
    }
}

/// `"1. s1\n2. s2\n..."`.
pub fn number_sentences(sentences: &SentenceList) -> Result<String, PromptError> {
    if sentences.is_empty() {
        return Err(PromptError::EmptySentences);
    }
    Ok(sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Parses a `N. text` line (leading whitespace allowed).
pub fn numbered_line(line: &str) -> Option<(usize, &str)> {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || !t[digits..].starts_with('.') {
        return None;
    }
    let rest = &t[digits + 1..];
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    let n = t[..digits].parse().ok()?;
    Some((n, rest.trim()))
}

/// Builds the prompt for a target whose summary is already split.
pub fn build_prompt_for(
    document: &str,
    summary: &SentenceList,
    domain: Domain,
    spec: &PromptSpec,
) -> Result<String, PromptError> {
    if spec.domain() != domain {
        return Err(PromptError::DomainMismatch {
            example: spec.domain(),
            input: domain,
        });
    }
    if summary.is_empty() {
        return Err(PromptError::EmptySummary {
            which: "target summary",
        });
    }
    let labels = &spec.labels;
    let doc_label = labels.document(domain);
    let ex = &spec.example;
    let blocks = [
        spec.instruction.clone(),
        format!("{doc_label}{}", ex.document),
        format!(
            "{}{}",
            labels.summary,
            number_sentences(&ex.summary_sentences)?
        ),
        format!(
            "{}{}",
            labels.questions,
            number_sentences(&ex.query_sentences)?
        ),
        format!("{doc_label}{document}"),
        format!("{}{}", labels.summary, number_sentences(summary)?),
        labels.questions.clone(),
    ];
    Ok(blocks.join("\n\n"))
}

/// Full annotation prompt for one document/summary pair.
pub fn build_annotation_prompt(
    pair: &DocumentSummaryPair,
    spec: &PromptSpec,
) -> Result<String, PromptError> {
    build_prompt_for(
        &pair.document,
        &segment_sentences(&pair.summary),
        pair.domain,
        spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(domain: Domain, summary: &str) -> DocumentSummaryPair {
        DocumentSummaryPair {
            id: "p".into(),
            document: "Some document text.".into(),
            summary: summary.into(),
            domain,
        }
    }

    #[test]
    fn numbering_unfolds() {
        let s = SentenceList::new(["A.", "B."]).unwrap();
        assert_eq!(number_sentences(&s).unwrap(), "1. A.\n2. B.");
        let s = SentenceList::new(["Only one."]).unwrap();
        assert_eq!(number_sentences(&s).unwrap(), "1. Only one.");
        assert_eq!(
            number_sentences(&SentenceList::default()),
            Err(PromptError::EmptySentences)
        );
    }

    #[test]
    fn news_example_numbers_four_sentences() {
        let fx = ExampleFixture::builtin(Domain::News);
        let text = number_sentences(&fx.summary_sentences).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("1. Tomas Medina Caracas was a fugitive"));
        assert_eq!(
            lines[3],
            "4. Colombian military: He was killed in an attack on a guerrilla encampment."
        );
    }

    #[test]
    fn builtin_examples_have_matching_counts() {
        for d in [Domain::News, Domain::Dialogue] {
            let fx = ExampleFixture::builtin(d);
            assert_eq!(fx.summary_sentences.len(), fx.wh_queries.len());
            assert_eq!(fx.summary_sentences.len(), fx.yesno_queries.len());
        }
        let dlg = ExampleFixture::builtin(Domain::Dialogue);
        assert!(dlg.document.contains("\r\nRob: I used to get one"));
        assert!(dlg.document.contains("I\u{2019}ve just fallen"));
    }

    #[test]
    fn instructions_follow_mode() {
        let p = build_annotation_prompt(
            &pair(Domain::News, "X happened."),
            &PromptSpec::builtin(Domain::News, QueryMode::Wh),
        )
        .unwrap();
        assert!(p.starts_with(WH_INSTRUCTION));
        assert!(p.contains("write a general question about the article"));
        let p = build_annotation_prompt(
            &pair(Domain::News, "X happened."),
            &PromptSpec::builtin(Domain::News, QueryMode::Yesno),
        )
        .unwrap();
        assert!(p.contains("write a binary question about the article"));
        assert!(p.contains("1. Yes: Was Tomas Medina Caracas a fugitive?"));
    }

    #[test]
    fn target_block_has_one_line_per_sentence() {
        let spec = PromptSpec::builtin(Domain::Dialogue, QueryMode::Wh);
        let p = build_annotation_prompt(
            &pair(Domain::Dialogue, "A left. B stayed. C laughed."),
            &spec,
        )
        .unwrap();
        assert!(p.ends_with("\n\nQuestions:\n"));
        let target = p.rsplit("\n\n").nth(1).unwrap();
        assert_eq!(target, "Summary:\n1. A left.\n2. B stayed.\n3. C laughed.");
        assert!(p.contains("Dialogue:\nSome document text."));
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let spec = PromptSpec::builtin(Domain::News, QueryMode::Wh);
        assert_eq!(
            build_annotation_prompt(&pair(Domain::Dialogue, "A."), &spec),
            Err(PromptError::DomainMismatch {
                example: Domain::News,
                input: Domain::Dialogue
            })
        );
    }

    #[test]
    fn empty_target_summary_is_rejected() {
        let spec = PromptSpec::builtin(Domain::News, QueryMode::Wh);
        assert!(matches!(
            build_annotation_prompt(&pair(Domain::News, " \n "), &spec),
            Err(PromptError::EmptySummary { .. })
        ));
    }

    #[test]
    fn labels_and_instruction_are_overridable() {
        let labels = SectionLabels {
            article: "Doc: ".into(),
            ..SectionLabels::default()
        };
        let spec = PromptSpec::builtin(Domain::News, QueryMode::Wh)
            .with_labels(labels)
            .with_instruction("Ask.");
        let p = build_annotation_prompt(&pair(Domain::News, "A."), &spec).unwrap();
        assert!(p.starts_with("Ask.\n\nDoc: BOGOTA"));
    }

    #[test]
    fn mismatched_example_is_rejected() {
        let err = OneShotExample::new(
            "d".into(),
            SentenceList::new(["a.", "b."]).unwrap(),
            SentenceList::new(["q?"]).unwrap(),
            Domain::News,
            QueryMode::Wh,
        )
        .unwrap_err();
        assert_eq!(
            err,
            PromptError::ExampleShape {
                summary: 2,
                queries: 1
            }
        );
    }

    #[test]
    fn prompt_set_checks_domains() {
        let news = PromptSpec::builtin(Domain::News, QueryMode::Wh);
        assert!(PromptSet::new(news.clone(), news).is_err());
        let set = PromptSet::builtin(QueryMode::Yesno);
        assert_eq!(set.get(Domain::Dialogue).domain(), Domain::Dialogue);
        assert_eq!(set.mode(), QueryMode::Yesno);
    }

    #[test]
    fn numbered_line_parsing() {
        assert_eq!(numbered_line("  12. Why?"), Some((12, "Why?")));
        assert_eq!(numbered_line("3."), Some((3, "")));
        assert_eq!(numbered_line("3.5 apples"), None);
        assert_eq!(numbered_line("Q1. x"), None);
    }
}
