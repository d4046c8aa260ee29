use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use super::{Backend, BackendError, Completion, CompletionRequest};

pub const DEFAULT_API_URL: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct TransportError {
    pub status: Option<u16>,
    pub message: String,
    /// Whether a retry may succeed (timeouts, 429, 5xx).
    pub transient: bool,
}

/// Sends one JSON body and returns the response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &str) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &str) -> Result<String, TransportError> {
        let response = self
            .client
            .post(url)
            .bearer_auth(api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_owned())
            .send()
            .map_err(|e| TransportError {
                status: None,
                message: e.to_string(),
                transient: e.is_timeout() || e.is_connect() || e.is_request(),
            })?;
        let status = response.status();
        let text = response.text().map_err(|e| TransportError {
            status: Some(status.as_u16()),
            message: e.to_string(),
            transient: true,
        })?;
        if status.is_success() {
            Ok(text)
        } else {
            Err(TransportError {
                status: Some(status.as_u16()),
                message: format!("HTTP {status}: {text}"),
                transient: status.as_u16() == 429 || status.is_server_error(),
            })
        }
    }
}

/// Exponential backoff with up to 50% additive jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (1-based count of failures so far).
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << attempt.saturating_sub(1).min(16))
            .min(self.max_delay);
        if exp.is_zero() {
            return exp;
        }
        let jitter = rand::rng().random_range(0.0..0.5);
        exp + exp.mul_f64(jitter)
    }
}

/// The outbound chat-completion body. The prompt is carried verbatim as the
/// single user message.
pub fn wire_payload(request: &CompletionRequest, model: &str) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed_hint {
        body["seed"] = json!(seed);
    }
    body
}

fn first_message_text(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Chat-completion client for any endpoint speaking the common wire shape.
pub struct ChatClient<T = HttpTransport> {
    transport: T,
    url: String,
    api_key: String,
    model: String,
    retry: RetryPolicy,
}

impl ChatClient<HttpTransport> {
    /// Reads `DOT_API_KEY` (required), `DOT_API_URL` and `DOT_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let api_key = std::env::var("DOT_API_KEY")
            .map_err(|_| BackendError::InvalidRequest("DOT_API_KEY is not set".into()))?;
        let url = std::env::var("DOT_API_URL").unwrap_or_else(|_| DEFAULT_API_URL.to_owned());
        let model = std::env::var("DOT_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.to_owned());
        let transport = HttpTransport::new(Duration::from_secs(120))?;
        Ok(Self::new(transport, url, api_key, model))
    }
}

impl<T: Transport> ChatClient<T> {
    pub fn new(
        transport: T,
        url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        Self {
            transport,
            url: url.into(),
            api_key: api_key.into(),
            model: model.into(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: Transport> Backend for ChatClient<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        request.validate()?;
        let body = wire_payload(request, &self.model).to_string();
        let started = Instant::now();
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.post_json(&self.url, &self.api_key, &body) {
                Ok(text) => {
                    return Ok(Completion {
                        text: first_message_text(&text)?,
                        latency: started.elapsed(),
                        provider: self.model.clone(),
                        request_fingerprint: request.fingerprint(),
                    })
                }
                Err(e) if e.transient && attempt < max_attempts => {
                    std::thread::sleep(self.retry.delay(attempt));
                }
                Err(e) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
    }

    fn provider(&self) -> &str {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    struct Scripted {
        replies: Mutex<Vec<Result<String, TransportError>>>,
        bodies: Mutex<Vec<String>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<String, TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                bodies: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, _url: &str, _key: &str, body: &str) -> Result<String, TransportError> {
            self.bodies.lock().unwrap().push(body.to_owned());
            self.replies.lock().unwrap().pop().expect("reply")
        }
    }

    fn ok(text: &str) -> Result<String, TransportError> {
        Ok(json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string())
    }

    fn transient() -> Result<String, TransportError> {
        Err(TransportError {
            status: Some(503),
            message: "HTTP 503".into(),
            transient: true,
        })
    }

    #[test]
    fn payload_carries_prompt_and_default_temperature() {
        let prompt = "Design a mask.\n  {keep} \"quoted\" ünïcode";
        let client = ChatClient::new(Scripted::new(vec![ok("hi")]), "u", "k", "m")
            .with_retry(RetryPolicy::no_delay(3));
        let out = client.complete(&CompletionRequest::new(prompt)).unwrap();
        assert_eq!(out.text, "hi");
        let bodies = client.transport().bodies.lock().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["temperature"].as_f64(), Some(0.7));
        assert_eq!(sent["max_tokens"].as_u64(), Some(1024));
        assert_eq!(sent["messages"][0]["content"].as_str(), Some(prompt));
        assert_eq!(sent["messages"][0]["role"].as_str(), Some("user"));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let client = ChatClient::new(Scripted::new(vec![transient(), transient(), ok("x")]), "u", "k", "m")
            .with_retry(RetryPolicy::no_delay(3));
        assert_eq!(client.complete(&CompletionRequest::new("p")).unwrap().text, "x");
        assert_eq!(client.transport().bodies.lock().unwrap().len(), 3);
    }

    #[test]
    fn retries_exhausted_reports_attempts() {
        let client = ChatClient::new(
            Scripted::new(vec![transient(), transient(), transient()]),
            "u",
            "k",
            "m",
        )
        .with_retry(RetryPolicy::no_delay(3));
        match client.complete(&CompletionRequest::new("p")) {
            Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn permanent_failure_not_retried() {
        let client = ChatClient::new(
            Scripted::new(vec![Err(TransportError {
                status: Some(401),
                message: "HTTP 401".into(),
                transient: false,
            })]),
            "u",
            "k",
            "m",
        );
        assert!(matches!(
            client.complete(&CompletionRequest::new("p")),
            Err(BackendError::Transport { attempts: 1, .. })
        ));
    }

    #[test]
    fn backoff_grows() {
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_secs(10),
        };
        let d1 = policy.delay(1);
        let d3 = policy.delay(3);
        assert!(d1 >= Duration::from_millis(100) && d1 < Duration::from_millis(150));
        assert!(d3 >= Duration::from_millis(400) && d3 < Duration::from_millis(600));
    }
}
