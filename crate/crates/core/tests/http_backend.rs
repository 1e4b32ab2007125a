//! HttpBackend against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use qfs_forge_core::annotate::{Annotator, AnnotatorConfig, OutcomeStatus};
use qfs_forge_core::backend::{
    BackendError, CompletionBackend, CompletionParams, CompletionRequest, HttpBackend, RequestKey,
};
use qfs_forge_core::corpus::{DocumentSummaryPair, Domain, QueryMode};
use qfs_forge_core::promptgen::PromptSet;

struct Seen {
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the canned `(status, body)` replies in order, one per connection,
/// and reports each request it saw.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut headers = Vec::new();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let _ = tx.send(Seen {
                headers,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn backend(url: &str) -> HttpBackend {
    HttpBackend::builder(url)
        .api_key("test-key-42")
        .timeout(Duration::from_secs(5))
        .backoff_base(Duration::from_millis(1))
        .build()
}

fn complete(b: &HttpBackend, prompt: &str) -> Result<String, BackendError> {
    b.complete(&CompletionRequest {
        prompt,
        params: &CompletionParams::annotation(),
        key: RequestKey::new(0, 0),
    })
}

#[test]
fn sends_wire_shape_and_bearer_token() {
    let (url, rx) = serve(vec![(200, r#"{"text": "1. Who?"}"#)]);
    let out = complete(&backend(&url), "P").unwrap();
    assert_eq!(out, "1. Who?");
    let seen = rx.recv().unwrap();
    assert_eq!(seen.header("authorization"), Some("Bearer test-key-42"));
    assert_eq!(
        seen.body,
        serde_json::json!({
            "prompt": "P",
            "max_tokens": 256,
            "temperature": 0.0,
            "top_p": 1.0,
            "stop": ["\n\n"],
        })
    );
}

#[test]
fn client_error_is_not_retried_and_keeps_body() {
    let (url, rx) = serve(vec![(400, r#"{"error": "bad prompt"}"#)]);
    let err = complete(&backend(&url), "P").unwrap_err();
    assert_eq!(
        err,
        BackendError::Status {
            status: 400,
            body: r#"{"error": "bad prompt"}"#.into()
        }
    );
    assert_eq!(rx.iter().count(), 1);
}

#[test]
fn server_errors_back_off_then_succeed() {
    let (url, rx) = serve(vec![
        (503, "busy"),
        (429, "slow down"),
        (200, r#"{"text": "ok"}"#),
    ]);
    assert_eq!(complete(&backend(&url), "P").unwrap(), "ok");
    assert_eq!(rx.iter().count(), 3);
}

#[test]
fn gives_up_after_three_backoffs() {
    let (url, rx) = serve(vec![(500, "a"), (500, "b"), (500, "c"), (500, "d")]);
    let err = complete(&backend(&url), "P").unwrap_err();
    assert_eq!(
        err,
        BackendError::Status {
            status: 500,
            body: "d".into()
        }
    );
    assert_eq!(rx.iter().count(), 4);
}

#[test]
fn malformed_response_is_reported() {
    let (url, _rx) = serve(vec![(200, r#"{"choices": []}"#)]);
    assert!(matches!(
        complete(&backend(&url), "P"),
        Err(BackendError::InvalidResponse(_))
    ));
}

#[test]
fn annotation_records_backend_error_with_body() {
    let (url, _rx) = serve(vec![(401, "key rejected")]);
    let prompts = PromptSet::builtin(QueryMode::Wh);
    let b = backend(&url);
    let config = AnnotatorConfig {
        retries: 0,
        ..AnnotatorConfig::default()
    };
    let pair = DocumentSummaryPair {
        id: "x".into(),
        document: "Rain fell all day.".into(),
        summary: "It rained.".into(),
        domain: Domain::News,
    };
    let out = Annotator::new(&prompts, &b, config).annotate_pair(0, &pair);
    assert_eq!(out.status, OutcomeStatus::BackendError);
    assert_eq!(out.raw_completion, "key rejected");
    assert!(out.triplet.is_none());
}

#[test]
fn debug_output_hides_key() {
    let b = backend("http://127.0.0.1:9/x");
    assert!(!format!("{b:?}").contains("test-key-42"));
}
