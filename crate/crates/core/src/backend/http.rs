use std::fmt;
use std::thread::sleep;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest};

/// Environment variable holding the bearer token for the live endpoint.
pub const API_KEY_ENV: &str = "QFS_FORGE_API_KEY";

const MAX_BACKOFF_SLEEPS: u32 = 3;

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    top_p: f64,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    text: String,
}

/// Blocking client for a completion endpoint.
///
/// One POST per completion; the request body is
/// `{prompt, max_tokens, temperature, top_p, stop}` and the response body is
/// `{text}`. HTTP 429 and 5xx are retried with exponential backoff (base
/// delay doubled each time, at most three sleeps); other non-2xx statuses
/// fail immediately with the body captured.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    backoff_base: Duration,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("backoff_base", &self.backoff_base)
            .finish()
    }
}

pub struct HttpBackendBuilder {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    backoff_base: Duration,
}

impl HttpBackendBuilder {
    pub fn api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn build(self) -> HttpBackend {
        HttpBackend {
            agent: ureq::AgentBuilder::new().timeout(self.timeout).build(),
            endpoint: self.endpoint,
            api_key: self.api_key,
            backoff_base: self.backoff_base,
        }
    }
}

impl HttpBackend {
    pub fn builder(endpoint: impl Into<String>) -> HttpBackendBuilder {
        HttpBackendBuilder {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post_once(&self, body: &str) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_string(body) {
            Ok(resp) => {
                let text = resp
                    .into_string()
                    .map_err(|e| BackendError::Transport(e.to_string()))?;
                serde_json::from_str::<WireResponse>(&text)
                    .map(|r| r.text)
                    .map_err(|e| BackendError::InvalidResponse(format!("{e}: {text}")))
            }
            Err(ureq::Error::Status(status, resp)) => Err(BackendError::Status {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(BackendError::Transport(t.to_string())),
        }
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Status { status, .. } => *status == 429 || *status >= 500,
        BackendError::Transport(_) => true,
        _ => false,
    }
}

impl CompletionBackend for HttpBackend {
    fn identity(&self) -> String {
        format!("http/{} {}", env!("CARGO_PKG_VERSION"), self.endpoint)
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        request.params.validate()?;
        let body = serde_json::to_string(&WireRequest {
            prompt: request.prompt,
            max_tokens: request.params.max_tokens,
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            stop: &request.params.stop,
        })
        .map_err(|e| BackendError::InvalidParams(e.to_string()))?;

        let mut sleeps = 0;
        loop {
            match self.post_once(&body) {
                Err(e) if retryable(&e) && sleeps < MAX_BACKOFF_SLEEPS => {
                    let delay = self.backoff_base * 2u32.pow(sleeps);
                    log::warn!("completion request failed ({e}); retrying in {delay:?}");
                    sleep(delay);
                    sleeps += 1;
                }
                other => return other,
            }
        }
    }
}
