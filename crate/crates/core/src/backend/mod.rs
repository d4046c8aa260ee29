//! Model access behind one request/response contract.
//!
//! [`MockBackend`] replays a script with no network activity and records
//! every request. [`ChatClient`] speaks the common chat-completion wire
//! format over HTTP. [`Recording`] wraps any backend with a call log.

mod live;
mod mock;

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{wire_payload, ChatClient, HttpTransport, RetryPolicy, Transport, TransportError};
pub use mock::{load_script, parse_script, MockBackend, ScriptEntry};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("script underrun: request #{request} has no scripted response")]
    ScriptUnderrun { request: usize },
    #[error("script mismatch at entry #{entry}: prompt does not contain {expected:?}")]
    ScriptMismatch { entry: usize, expected: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend {0} does not record calls")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed_hint: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed_hint: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_seed_hint(mut self, seed: u64) -> Self {
        self.seed_hint = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the request's JSON serialization.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub provider: String,
    pub request_fingerprint: String,
}

/// A language model, live or scripted. Implementations must tolerate
/// concurrent `complete` calls.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    /// Every request seen so far, in issue order.
    fn call_log(&self) -> Result<Vec<CompletionRequest>, BackendError> {
        Err(BackendError::Unsupported(self.provider().to_owned()))
    }

    fn provider(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn call_log(&self) -> Result<Vec<CompletionRequest>, BackendError> {
        (**self).call_log()
    }

    fn provider(&self) -> &str {
        (**self).provider()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }

    fn call_log(&self) -> Result<Vec<CompletionRequest>, BackendError> {
        (**self).call_log()
    }

    fn provider(&self) -> &str {
        (**self).provider()
    }
}

/// Adds a call log to any backend.
pub struct Recording<B> {
    inner: B,
    log: Mutex<Vec<CompletionRequest>>,
}

impl<B: Backend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        self.log.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }

    fn call_log(&self) -> Result<Vec<CompletionRequest>, BackendError> {
        Ok(self.log.lock().unwrap().clone())
    }

    fn provider(&self) -> &str {
        self.inner.provider()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let r = CompletionRequest::new("p");
        assert_eq!(r.temperature, 0.7);
        assert_eq!(r.max_tokens, 1024);
        assert!(r.validate().is_ok());
        assert!(r.clone().with_temperature(2.5).validate().is_err());
    }

    #[test]
    fn fingerprint_matches_independent_hash() {
        let r = CompletionRequest::new("design a mask").with_seed_hint(7);
        let json = format!(
            "{{\"prompt\":\"design a mask\",\"temperature\":0.7,\"max_tokens\":1024,\"seed_hint\":7}}"
        );
        let expected = hex::encode(Sha256::digest(json.as_bytes()));
        assert_eq!(r.fingerprint(), expected);
        assert_ne!(r.fingerprint(), CompletionRequest::new("design a mask").fingerprint());
    }
}
