//! Text-completion backends.
//!
//! Everything that generates text (the query annotator, the query-focused
//! summarizer, the query unifier) goes through [`CompletionBackend`].
//! [`MockBackend`] is deterministic and offline; [`HttpBackend`] talks to a
//! completion endpoint.

mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpBackendBuilder, API_KEY_ENV};
pub use mock::{Canned, Fallback, MockBackend, MockScript, ScriptEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl CompletionParams {
    /// Greedy decoding, stopping at the first blank line. Used for query
    /// generation, where the numbered output has to parse.
    pub fn annotation() -> Self {
        Self {
            max_tokens: 256,
            temperature: 0.0,
            top_p: 1.0,
            stop: vec!["\n\n".to_string()],
        }
    }

    /// Sampling preset for zero-shot summarization: temperature 1.0,
    /// nucleus 0.9, up to 512 tokens.
    pub fn summarization() -> Self {
        Self {
            max_tokens: 512,
            temperature: 1.0,
            top_p: 0.9,
            stop: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self::annotation()
    }
}

/// Identifies a request within a run: which input item, which attempt.
/// Scripted mocks key their canned answers on it; live backends ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RequestKey {
    pub item: usize,
    pub attempt: u32,
}

impl RequestKey {
    pub fn new(item: usize, attempt: u32) -> Self {
        Self { item, attempt }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a CompletionParams,
    pub key: RequestKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("invalid completion parameters: {0}")]
    InvalidParams(String),
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("no canned completion for request {item} (attempt {attempt})")]
    Unscripted { item: usize, attempt: u32 },
}

impl BackendError {
    /// Response body or message kept for the failure audit.
    pub fn audit_text(&self) -> String {
        match self {
            BackendError::Status { body, .. } => body.clone(),
            other => other.to_string(),
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Name and version, recorded alongside outputs.
    fn identity(&self) -> String;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}
