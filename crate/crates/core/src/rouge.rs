//! ROUGE-1/2/L over the shared tokenizer, plus a batch evaluator over
//! `{"id", "text"}` JSON-lines files.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_jsonl, CorpusError};
use crate::report::render_table;
use crate::tokenize::{mean, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when either side had no n-grams to compare.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty: bool,
}

impl RougeScore {
    pub fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return Self {
                empty: true,
                ..Self::default()
            };
        }
        let precision = matched as f64 / candidate_total as f64;
        let recall = matched as f64 / reference_total as f64;
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
            empty: false,
        }
    }

    fn headline(&self, metric: Headline) -> f64 {
        match metric {
            Headline::F1 => self.f1,
            Headline::Recall => self.recall,
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RougeError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

fn rouge_n_tokens(cand: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand_counts = ngram_counts(cand, n);
    let ref_counts = ngram_counts(reference, n);
    let matched = cand_counts
        .iter()
        .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(
        matched,
        cand.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// ROUGE-N with clipped n-gram matches.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<RougeScore, RougeError> {
    if n == 0 {
        return Err(RougeError::ZeroOrder);
    }
    Ok(rouge_n_tokens(
        &tokenize(candidate),
        &tokenize(reference),
        n,
    ))
}

/// Length of the longest common subsequence, in O(|a|·|b|) time and
/// O(min) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

fn rouge_l_tokens(cand: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_counts(lcs_len(cand, reference), cand.len(), reference.len())
}

/// ROUGE-L from the token-level LCS.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

impl RougeScores {
    pub fn compute(candidate: &str, reference: &str) -> Self {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        Self {
            rouge1: rouge_n_tokens(&c, &r, 1),
            rouge2: rouge_n_tokens(&c, &r, 2),
            rouge_l: rouge_l_tokens(&c, &r),
        }
    }

    /// Best score per metric across several references.
    pub fn best_of<'a, I>(candidate: &str, references: I, headline: Headline) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut best: Option<RougeScores> = None;
        for r in references {
            let s = Self::compute(candidate, r);
            best = Some(match best {
                None => s,
                Some(b) => {
                    let pick = |x: RougeScore, y: RougeScore| {
                        if y.headline(headline) > x.headline(headline) {
                            y
                        } else {
                            x
                        }
                    };
                    RougeScores {
                        rouge1: pick(b.rouge1, s.rouge1),
                        rouge2: pick(b.rouge2, s.rouge2),
                        rouge_l: pick(b.rouge_l, s.rouge_l),
                    }
                }
            });
        }
        best.unwrap_or_default()
    }
}

/// Which value a report leads with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Headline {
    #[default]
    F1,
    Recall,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum TextField {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
struct TextRecord {
    id: String,
    text: TextField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    #[serde(flatten)]
    pub scores: RougeScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub headline: Headline,
    pub count: usize,
    pub mean: RougeScores,
    pub examples: Vec<ExampleScore>,
}

impl EvalReport {
    /// Builds a report from per-example scores, averaging each field.
    pub fn from_examples(examples: Vec<ExampleScore>, headline: Headline) -> Self {
        let avg = |f: &dyn Fn(&RougeScores) -> RougeScore| -> RougeScore {
            let col = |g: &dyn Fn(&RougeScore) -> f64| {
                mean(
                    &examples
                        .iter()
                        .map(|e| g(&f(&e.scores)))
                        .collect::<Vec<_>>(),
                )
                .unwrap_or_default()
            };
            RougeScore {
                precision: col(&|s| s.precision),
                recall: col(&|s| s.recall),
                f1: col(&|s| s.f1),
                empty: false,
            }
        };
        let mean = RougeScores {
            rouge1: avg(&|s| s.rouge1),
            rouge2: avg(&|s| s.rouge2),
            rouge_l: avg(&|s| s.rouge_l),
        };
        Self {
            headline,
            count: examples.len(),
            mean,
            examples,
        }
    }

    pub fn render(&self) -> String {
        let mut rows = vec![vec![
            "metric".to_string(),
            "precision".to_string(),
            "recall".to_string(),
            "f1".to_string(),
        ]];
        for (name, s) in [
            ("ROUGE-1", self.mean.rouge1),
            ("ROUGE-2", self.mean.rouge2),
            ("ROUGE-L", self.mean.rouge_l),
        ] {
            rows.push(vec![
                name.to_string(),
                format!("{:.4}", s.precision),
                format!("{:.4}", s.recall),
                format!("{:.4}", s.f1),
            ]);
        }
        let headline = match self.headline {
            Headline::F1 => "f1",
            Headline::Recall => "recall",
        };
        format!(
            "{} examples, headline {headline}\n{}",
            self.count,
            render_table(&rows)
        )
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Read(#[from] CorpusError),
    #[error("{}: duplicate id `{id}`", path.display())]
    DuplicateId { path: PathBuf, id: String },
    #[error("{predictions} predictions vs {references} references; unmatched ids: {}", offenders.join(", "))]
    Misaligned {
        predictions: usize,
        references: usize,
        offenders: Vec<String>,
    },
}

fn load_texts(path: &Path) -> Result<Vec<(String, Vec<String>)>, EvalError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (_, rec) in read_jsonl::<TextRecord>(path)? {
        if !seen.insert(rec.id.clone()) {
            return Err(EvalError::DuplicateId {
                path: path.to_path_buf(),
                id: rec.id,
            });
        }
        let texts = match rec.text {
            TextField::One(t) => vec![t],
            TextField::Many(ts) => ts,
        };
        out.push((rec.id, texts));
    }
    Ok(out)
}

/// Scores every prediction against its reference(s), matched by id.
pub fn evaluate_run(
    predictions: &Path,
    references: &Path,
    headline: Headline,
) -> Result<EvalReport, EvalError> {
    use rayon::prelude::*;

    let preds = load_texts(predictions)?;
    let refs: HashMap<String, Vec<String>> = load_texts(references)?.into_iter().collect();

    let pred_ids: BTreeSet<&String> = preds.iter().map(|(id, _)| id).collect();
    let mut offenders: Vec<String> = preds
        .iter()
        .filter(|(id, _)| !refs.contains_key(id))
        .map(|(id, _)| format!("{id} (no reference)"))
        .collect();
    let mut missing: Vec<String> = refs
        .keys()
        .filter(|id| !pred_ids.contains(id))
        .map(|id| format!("{id} (no prediction)"))
        .collect();
    missing.sort();
    offenders.extend(missing);
    if !offenders.is_empty() || preds.len() != refs.len() {
        return Err(EvalError::Misaligned {
            predictions: preds.len(),
            references: refs.len(),
            offenders,
        });
    }

    let examples: Vec<ExampleScore> = preds
        .par_iter()
        .map(|(id, texts)| {
            let candidate = texts.join(" ");
            let scores =
                RougeScores::best_of(&candidate, refs[id].iter().map(String::as_str), headline);
            ExampleScore {
                id: id.clone(),
                scores,
            }
        })
        .collect();
    Ok(EvalReport::from_examples(examples, headline))
}
