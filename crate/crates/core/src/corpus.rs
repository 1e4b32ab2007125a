//! Source corpora, sentence segmentation, and triplet serialization.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::QueryType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    News,
    Dialogue,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::News => "news",
            Domain::Dialogue => "dialogue",
        })
    }
}

/// Which kind of question the one-shot example teaches the annotator to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Wh,
    Yesno,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Wh => "wh",
            QueryMode::Yesno => "yesno",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummaryPair {
    pub id: String,
    pub document: String,
    pub summary: String,
    pub domain: Domain,
}

/// Ordered, non-empty sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct SentenceList(Vec<String>);

impl SentenceList {
    /// Wraps already-split sentences. Each is trimmed; empty ones are an error.
    pub fn new<I, S>(sentences: I) -> Result<Self, EmptySentence>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        for (index, s) in sentences.into_iter().enumerate() {
            let s: String = s.into();
            let t = s.trim();
            if t.is_empty() {
                return Err(EmptySentence { index });
            }
            out.push(t.to_string());
        }
        Ok(Self(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl TryFrom<Vec<String>> for SentenceList {
    type Error = EmptySentence;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        SentenceList::new(v)
    }
}

impl From<SentenceList> for Vec<String> {
    fn from(s: SentenceList) -> Self {
        s.0
    }
}

impl<'a> IntoIterator for &'a SentenceList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sentence {index} is empty")]
pub struct EmptySentence {
    pub index: usize,
}

/// Strips any number of leading list markers of the form `N.` followed by
/// whitespace or end of text.
pub(crate) fn strip_numbering(mut s: &str) -> &str {
    loop {
        let t = s.trim_start();
        let digits = t.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 || !t[digits..].starts_with('.') {
            return t;
        }
        let rest = &t[digits + 1..];
        if rest.is_empty() || rest.starts_with(char::is_whitespace) {
            s = rest;
        } else {
            return t;
        }
    }
}

/// Splits text into sentences.
///
/// Boundaries are line breaks and any of `.`, `!`, `?` followed by
/// whitespace. Punctuation stays attached to its sentence and leading `N.`
/// list markers are removed. Abbreviations are not special-cased, so
/// `"U.S. officials"` splits after `"U.S."`.
pub fn segment_sentences(text: &str) -> SentenceList {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if matches!(c, '.' | '!' | '?') {
                if let Some(&(_, next)) = chars.peek() {
                    if next.is_whitespace() {
                        push_piece(&mut out, &line[start..i + c.len_utf8()]);
                        start = i + c.len_utf8();
                    }
                }
            }
        }
        push_piece(&mut out, &line[start..]);
    }
    SentenceList(out)
}

fn push_piece(out: &mut Vec<String>, piece: &str) {
    let s = strip_numbering(piece).trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// A document, its per-sentence queries, and its summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTriplet {
    pub id: String,
    pub document: String,
    pub summary: String,
    pub queries: Vec<String>,
    pub mode: QueryMode,
    pub query_types: Vec<QueryType>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TripletError {
    #[error("triplet {id}: {queries} queries for {sentences} summary sentences")]
    QueryCount {
        id: String,
        queries: usize,
        sentences: usize,
    },
    #[error("triplet {id}: query {index} does not end with '?'")]
    NotAQuestion { id: String, index: usize },
    #[error("triplet {id}: {types} query types for {queries} queries")]
    TypeCount {
        id: String,
        types: usize,
        queries: usize,
    },
}

impl AnnotatedTriplet {
    pub fn validate(&self) -> Result<(), TripletError> {
        let sentences = segment_sentences(&self.summary).len();
        if self.queries.len() != sentences {
            return Err(TripletError::QueryCount {
                id: self.id.clone(),
                queries: self.queries.len(),
                sentences,
            });
        }
        if let Some(index) = self
            .queries
            .iter()
            .position(|q| !q.trim_end().ends_with('?'))
        {
            return Err(TripletError::NotAQuestion {
                id: self.id.clone(),
                index,
            });
        }
        if self.query_types.len() != self.queries.len() {
            return Err(TripletError::TypeCount {
                id: self.id.clone(),
                types: self.query_types.len(),
                queries: self.queries.len(),
            });
        }
        Ok(())
    }
}

/// Trims a query and makes sure it ends with a question mark.
pub fn normalize_query(q: &str) -> String {
    let t = q.trim();
    if t.ends_with('?') {
        t.to_string()
    } else {
        let base = t.trim_end_matches(['.', '!', ':', ';', ',']).trim_end();
        format!("{base}?")
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: malformed record: {source}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}:{line}: field `{field}` is empty", path.display())]
    EmptyField {
        path: PathBuf,
        line: usize,
        field: &'static str,
    },
    #[error("{}:{line}: duplicate id `{id}`", path.display())]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{}:{line}: {source}", path.display())]
    InvalidTriplet {
        path: PathBuf,
        line: usize,
        #[source]
        source: TripletError,
    },
    #[error("refusing to write: {0}")]
    Rejected(#[from] TripletError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a JSON-lines file into records, one per non-blank line, with
/// 1-based line numbers for error reporting.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Writes records as JSON lines. An empty slice produces an empty file.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads document/summary pairs in file order, rejecting empty fields and
/// repeated ids.
pub fn load_corpus(path: &Path) -> Result<Vec<DocumentSummaryPair>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, pair) in read_jsonl::<DocumentSummaryPair>(path)? {
        for (field, value) in [("document", &pair.document), ("summary", &pair.summary)] {
            if value.trim().is_empty() {
                return Err(CorpusError::EmptyField {
                    path: path.to_path_buf(),
                    line,
                    field,
                });
            }
        }
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: pair.id,
            });
        }
        out.push(pair);
    }
    Ok(out)
}

/// Writes triplets one per line after checking every one of them.
pub fn write_triplets(triplets: &[AnnotatedTriplet], path: &Path) -> Result<(), CorpusError> {
    for t in triplets {
        t.validate()?;
    }
    write_jsonl(triplets, path)
}

pub fn load_triplets(path: &Path) -> Result<Vec<AnnotatedTriplet>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, t) in read_jsonl::<AnnotatedTriplet>(path)? {
        t.validate().map_err(|source| CorpusError::InvalidTriplet {
            path: path.to_path_buf(),
            line,
            source,
        })?;
        if !seen.insert(t.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: t.id,
            });
        }
        out.push(t);
    }
    Ok(out)
}
