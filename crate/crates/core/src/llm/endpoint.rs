use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::{prompt_query, LlmError};
use crate::graph::TutorRegistry;
use crate::model::canonical_json;

pub const DEFAULT_TOKEN_ENV: &str = "TUTORSIM_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{message}")]
pub struct TransportError {
    /// Worth retrying (timeouts, refused connections, 429 and 5xx).
    pub transient: bool,
    pub message: String,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        TransportError {
            transient: true,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        TransportError {
            transient: false,
            message: message.into(),
        }
    }
}

/// A text-completion service.
pub trait Endpoint: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

impl<E: Endpoint + ?Sized> Endpoint for Arc<E> {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        (**self).complete(prompt)
    }
}

type Responder = dyn Fn(&str) -> Result<String, TransportError> + Send + Sync;

/// Endpoint backed by a closure.
pub struct MockEndpoint(Box<Responder>);

impl MockEndpoint {
    pub fn new(f: impl Fn(&str) -> Result<String, TransportError> + Send + Sync + 'static) -> Self {
        MockEndpoint(Box::new(f))
    }

    /// Always answers with `text`.
    pub fn canned(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }
}

impl Endpoint for MockEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        (self.0)(prompt)
    }
}

/// Offline stand-in for a model: reads the state (and candidate action)
/// out of the prompt and answers as the example-tracing tutor would.
pub struct OracleEndpoint {
    tutors: Arc<TutorRegistry>,
}

impl OracleEndpoint {
    pub fn new(tutors: Arc<TutorRegistry>) -> Self {
        OracleEndpoint { tutors }
    }
}

impl Endpoint for OracleEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let Some((state, candidate)) = prompt_query(prompt) else {
            return Ok("I cannot read this problem.".into());
        };
        Ok(match candidate {
            Some(sai) => match self.tutors.check(&state, &sai) {
                Some(g) if g.is_correct() => "yes".into(),
                Some(_) => "no".into(),
                None => "I do not know this problem.".into(),
            },
            None => match self.tutors.demo(&state) {
                Some(sai) => format!("The next step is {}", canonical_json(&sai)),
                None => "I do not know this problem.".into(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TransportError>,
}

/// Records every exchange with the wrapped endpoint, in memory and
/// optionally appended to a JSONL transcript file.
pub struct RecordingEndpoint<E> {
    inner: E,
    entries: Mutex<Vec<TranscriptEntry>>,
    file: Option<Mutex<File>>,
}

impl<E: Endpoint> RecordingEndpoint<E> {
    pub fn new(inner: E) -> Self {
        RecordingEndpoint {
            inner,
            entries: Mutex::new(Vec::new()),
            file: None,
        }
    }

    pub fn to_file(inner: E, path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingEndpoint {
            file: Some(Mutex::new(file)),
            ..Self::new(inner)
        })
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().map(|e| e.clone()).unwrap_or_default()
    }
}

impl<E: Endpoint> Endpoint for RecordingEndpoint<E> {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let result = self.inner.complete(prompt);
        let entry = TranscriptEntry {
            prompt: prompt.to_string(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().cloned(),
        };
        if let Some(f) = &self.file {
            let line = serde_json::to_string(&entry).expect("transcript entry serializes");
            let mut f = f
                .lock()
                .map_err(|_| TransportError::permanent("transcript lock poisoned"))?;
            writeln!(f, "{line}").map_err(|e| TransportError::permanent(format!("transcript write: {e}")))?;
        }
        if let Ok(mut e) = self.entries.lock() {
            e.push(entry);
        }
        result
    }
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEntry>, LlmError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LlmError::Transcript(format!("line {}: {e}", i + 1))))
        .collect()
}

/// Serves a recorded transcript in order; a prompt that differs from the
/// recorded one is a permanent transport error.
pub struct ReplayEndpoint {
    entries: Vec<TranscriptEntry>,
    pos: Mutex<usize>,
}

impl ReplayEndpoint {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ReplayEndpoint {
            entries,
            pos: Mutex::new(0),
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        Ok(Self::new(parse_transcript(text)?))
    }
}

impl Endpoint for ReplayEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let mut pos = self
            .pos
            .lock()
            .map_err(|_| TransportError::permanent("replay lock poisoned"))?;
        let entry = self
            .entries
            .get(*pos)
            .ok_or_else(|| TransportError::permanent("transcript exhausted"))?;
        if entry.prompt != prompt {
            return Err(TransportError::permanent(format!(
                "prompt {} differs from transcript",
                *pos + 1
            )));
        }
        *pos += 1;
        match (&entry.response, &entry.error) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(e)) => Err(e.clone()),
            (None, None) => Err(TransportError::permanent("transcript entry has no response")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base of an OpenAI-compatible API, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub request_cap: Option<u64>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "default".into(),
            token_env: DEFAULT_TOKEN_ENV.into(),
            request_cap: None,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            max_in_flight: 4,
        }
    }
}

/// Chat-completions client for OpenAI-compatible servers.
pub struct HttpEndpoint {
    agent: ureq::Agent,
    url: String,
    model: String,
    token: Option<String>,
}

impl HttpEndpoint {
    pub fn new(cfg: &EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        HttpEndpoint {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model.clone(),
            token: std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty()),
        }
    }
}

fn classify(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            TransportError::transient(format!("HTTP status {code}"))
        }
        ureq::Error::StatusCode(code) => TransportError::permanent(format!("HTTP status {code}")),
        e @ (ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound) => TransportError::transient(e.to_string()),
        e => TransportError::permanent(e.to_string()),
    }
}

impl Endpoint for HttpEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(&body).map_err(classify)?;
        let value: serde_json::Value = resp.body_mut().read_json().map_err(classify)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::permanent("response has no choices[0].message.content"))
    }
}

/// Retrying, capped front end to an endpoint. Every attempt, including
/// retries, counts against the request cap.
pub struct LlmClient {
    endpoint: Arc<dyn Endpoint>,
    max_retries: u32,
    backoff: Duration,
    cap: Option<u64>,
    attempts: AtomicU64,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
}

impl LlmClient {
    pub fn new(endpoint: Arc<dyn Endpoint>) -> Self {
        let d = EndpointConfig::default();
        LlmClient {
            endpoint,
            max_retries: d.max_retries,
            backoff: Duration::from_millis(d.backoff_ms),
            cap: None,
            attempts: AtomicU64::new(0),
            max_in_flight: d.max_in_flight,
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
        }
    }

    pub fn from_config(endpoint: Arc<dyn Endpoint>, cfg: &EndpointConfig) -> Self {
        Self::new(endpoint)
            .with_retries(cfg.max_retries, Duration::from_millis(cfg.backoff_ms))
            .with_cap(cfg.request_cap)
            .with_max_in_flight(cfg.max_in_flight)
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn with_cap(mut self, cap: Option<u64>) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    fn reserve(&self) -> Result<(), LlmError> {
        let n = self.attempts.fetch_add(1, Ordering::SeqCst);
        match self.cap {
            Some(cap) if n >= cap => {
                self.attempts.fetch_sub(1, Ordering::SeqCst);
                Err(LlmError::BudgetExceeded { cap })
            }
            _ => Ok(()),
        }
    }

    fn call(&self, prompt: &str) -> Result<String, TransportError> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
            while *n >= self.max_in_flight {
                n = self.slot_free.wait(n).unwrap_or_else(|p| p.into_inner());
            }
            *n += 1;
        }
        let r = self.endpoint.complete(prompt);
        *self.in_flight.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.slot_free.notify_one();
        r
    }

    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut attempt = 0u32;
        loop {
            self.reserve()?;
            attempt += 1;
            match self.call(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.transient && attempt <= self.max_retries => {
                    std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
                }
                Err(last) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        last,
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn request_cap() {
        let c = LlmClient::new(Arc::new(MockEndpoint::canned("yes"))).with_cap(Some(3));
        for _ in 0..3 {
            assert_eq!(c.complete("p").unwrap(), "yes");
        }
        assert!(matches!(c.complete("p"), Err(LlmError::BudgetExceeded { cap: 3 })));
    }

    #[test]
    fn retries_transient_then_gives_up() {
        let calls = Arc::new(AtomicUsize::new(0));
        let k = calls.clone();
        let flaky = MockEndpoint::new(move |_| {
            if k.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TransportError::transient("503"))
            } else {
                Ok("ok".into())
            }
        });
        let c = LlmClient::new(Arc::new(flaky)).with_retries(3, Duration::ZERO);
        assert_eq!(c.complete("p").unwrap(), "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let down = MockEndpoint::new(|_| Err(TransportError::transient("refused")));
        let c = LlmClient::new(Arc::new(down)).with_retries(2, Duration::ZERO);
        assert!(matches!(c.complete("p"), Err(LlmError::Transport { attempts: 3, .. })));

        let bad = MockEndpoint::new(|_| Err(TransportError::permanent("401")));
        let c = LlmClient::new(Arc::new(bad)).with_retries(2, Duration::ZERO);
        assert!(matches!(c.complete("p"), Err(LlmError::Transport { attempts: 1, .. })));
    }

    #[test]
    fn unreachable_http_endpoint() {
        let cfg = EndpointConfig {
            base_url: "http://127.0.0.1:1/v1".into(),
            timeout_secs: 5,
            ..Default::default()
        };
        let c = LlmClient::new(Arc::new(HttpEndpoint::new(&cfg))).with_retries(1, Duration::ZERO);
        assert!(matches!(c.complete("hello"), Err(LlmError::Transport { .. })));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let rec = RecordingEndpoint::to_file(MockEndpoint::new(|p| Ok(format!("echo {p}"))), &path).unwrap();
        rec.complete("a").unwrap();
        rec.complete("b").unwrap();
        assert_eq!(rec.entries().len(), 2);
        let replay = ReplayEndpoint::from_jsonl(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(replay.complete("a").unwrap(), "echo a");
        assert!(!replay.complete("x").unwrap_err().transient);
        assert_eq!(replay.complete("b").unwrap(), "echo b");
        assert!(replay.complete("c").is_err());
    }
}
