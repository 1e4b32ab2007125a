use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, CompletionBackend, CompletionRequest};
use crate::annotate::{split_qfs_input, ZERO_SHOT_INSTRUCTION};
use crate::corpus::segment_sentences;
use crate::promptgen::numbered_line;
use crate::tokenize::{token_types, tokenize};

/// A canned reply: either completion text or a simulated backend failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Canned {
    Text(String),
    Error { error: String },
}

/// Canned replies for one input item, indexed by attempt. Attempts past the
/// end of the list reuse the last entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub request: usize,
    pub attempts: Vec<Canned>,
}

/// What the mock does for items that have no script entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Derive a plausible completion from the prompt itself.
    #[default]
    Synthetic,
    Error,
}

/// On-disk mock script:
/// `{"seed": 7, "fallback": "synthetic", "responses": [{"request": 0, "attempts": ["1. Who?"]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fallback: Fallback,
    #[serde(default)]
    pub responses: Vec<ScriptEntry>,
}

/// Offline backend. Output is a pure function of the script, the seed, the
/// prompt, and the request key, so runs are reproducible regardless of
/// scheduling.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    fallback: Fallback,
    responses: HashMap<usize, Vec<Canned>>,
}

impl MockBackend {
    pub fn synthetic(seed: u64) -> Self {
        Self::from_script(MockScript {
            seed,
            ..MockScript::default()
        })
    }

    pub fn from_script(script: MockScript) -> Self {
        Self {
            seed: script.seed,
            fallback: script.fallback,
            responses: script
                .responses
                .into_iter()
                .map(|e| (e.request, e.attempts))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::from_script(script))
    }

    /// Replaces the script's seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn hash(&self, prompt: &str, salt: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((salt as u64).to_le_bytes());
        h.update(prompt.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"))
    }

    fn synthesize(&self, prompt: &str) -> String {
        if let Some((query, document)) = split_qfs_input(prompt) {
            return self.summarize(prompt, query, document);
        }
        if let Some(rest) = prompt.strip_prefix(ZERO_SHOT_INSTRUCTION) {
            let rest = rest.strip_prefix('\n').unwrap_or(rest);
            let (query, document) = rest.split_once('\n').unwrap_or((rest, ""));
            return self.summarize(prompt, query, document);
        }
        self.questions(prompt)
    }

    /// Picks one or two document sentences with the most query-word overlap.
    fn summarize(&self, prompt: &str, query: &str, document: &str) -> String {
        let sentences = segment_sentences(document);
        if sentences.is_empty() {
            return String::new();
        }
        let q = token_types(query);
        let mut scored: Vec<(usize, usize)> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (i, tokenize(s).iter().filter(|t| q.contains(*t)).count()))
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let k = 1 + (self.hash(prompt, 0) % 2) as usize;
        let mut picked: Vec<usize> = scored.iter().take(k).map(|(i, _)| *i).collect();
        picked.sort_unstable();
        picked
            .iter()
            .map(|i| sentences.as_slice()[*i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Writes one numbered question per line of the last numbered block in
    /// the prompt (the target summary).
    fn questions(&self, prompt: &str) -> String {
        let Some(target) = prompt
            .rsplit("\n\n")
            .find(|p| p.lines().any(|l| numbered_line(l).is_some()))
        else {
            return String::new();
        };
        let yesno = prompt.lines().any(|l| {
            numbered_line(l).is_some_and(|(_, s)| s.starts_with("Yes:") || s.starts_with("No:"))
        });
        target
            .lines()
            .filter_map(numbered_line)
            .enumerate()
            .map(|(i, (_, sentence))| {
                let h = self.hash(prompt, i + 1);
                let topic = sentence.trim().trim_end_matches(['.', '!', '?']);
                let q = if yesno {
                    let label = if h.is_multiple_of(2) { "Yes" } else { "No" };
                    format!("{label}: Is it true that {topic}?")
                } else {
                    let short: Vec<&str> = topic.split_whitespace().take(8).collect();
                    let short = short.join(" ");
                    match h % 6 {
                        0 => format!("What happened regarding {short}?"),
                        1 => format!("Who is involved in {short}?"),
                        2 => format!("How did {short} come about?"),
                        3 => format!("Why does {short} matter?"),
                        4 => format!("When did {short} happen?"),
                        _ => format!("Where did {short} take place?"),
                    }
                };
                format!("{}. {q}", i + 1)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl CompletionBackend for MockBackend {
    fn identity(&self) -> String {
        format!("mock/{} seed={}", env!("CARGO_PKG_VERSION"), self.seed)
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        request.params.validate()?;
        let key = request.key;
        match self.responses.get(&key.item) {
            Some(attempts) if !attempts.is_empty() => {
                let i = (key.attempt as usize).min(attempts.len() - 1);
                match &attempts[i] {
                    Canned::Text(t) => Ok(t.clone()),
                    Canned::Error { error } => Err(BackendError::Scripted(error.clone())),
                }
            }
            _ => match self.fallback {
                Fallback::Synthetic => Ok(self.synthesize(request.prompt)),
                Fallback::Error => Err(BackendError::Unscripted {
                    item: key.item,
                    attempt: key.attempt,
                }),
            },
        }
    }
}
