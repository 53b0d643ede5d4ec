use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;
use tracing::{debug, warn};

use super::prompts::render;
use super::{BackendError, ChatBackend, GenerationRequest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    /// Connection problems, timeouts, 429 and 5xx responses.
    #[error("{0}")]
    Retryable(String),
    #[error("{0}")]
    Fatal(String),
}

/// Posts a JSON body and returns the decoded JSON response.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TransportError::Fatal(format!("HTTP {status}: {text}")));
        }
        resp.json::<Value>()
            .map_err(|e| TransportError::Fatal(format!("invalid JSON body: {e}")))
    }
}

/// Counting gate bounding in-flight requests across threads.
struct Limiter {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Self { slots: Mutex::new(n.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut slots = self.slots.lock().expect("limiter poisoned");
        while *slots == 0 {
            slots = self.freed.wait(slots).expect("limiter poisoned");
        }
        *slots -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().expect("limiter poisoned") += 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completions client: `POST {endpoint}/chat/completions`.
pub struct HttpBackend {
    endpoint: String,
    model: String,
    token: Option<String>,
    transport: Arc<dyn Transport>,
    max_attempts: usize,
    timeout: Duration,
    backoff: Duration,
    end_marker: String,
    limiter: Limiter,
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        token: Option<String>,
        transport: Arc<dyn Transport>,
        max_attempts: usize,
        timeout: Duration,
        max_concurrent: usize,
    ) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            token,
            transport,
            max_attempts: max_attempts.max(1),
            timeout,
            backoff: Duration::from_millis(250),
            end_marker: "<end>".to_string(),
            limiter: Limiter::new(max_concurrent),
        }
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    pub fn with_end_marker(mut self, marker: impl Into<String>) -> Self {
        self.end_marker = marker.into();
        self
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint)
    }

    pub fn request_body(&self, request: &GenerationRequest) -> Value {
        let prompt = render(request, &self.end_marker);
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        });
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        body
    }
}

fn first_choice_content(resp: &Value) -> Result<String, BackendError> {
    let choice = resp
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| BackendError::Unavailable("response carries no choices".into()))?;
    Ok(choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string())
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let body = self.request_body(request);
        let url = self.url();
        let _slot = self.limiter.acquire();
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                let wait = self.backoff * 2u32.saturating_pow(attempt as u32 - 1);
                debug!(attempt, ?wait, "retrying chat completion");
                thread::sleep(wait);
            }
            match self.transport.post_json(&url, self.token.as_deref(), &body, self.timeout) {
                Ok(resp) => return first_choice_content(&resp),
                Err(TransportError::Retryable(e)) => {
                    warn!(attempt, error = %e, "chat completion failed");
                    last = e;
                }
                Err(TransportError::Fatal(e)) => return Err(BackendError::Unavailable(e)),
            }
        }
        Err(BackendError::Unavailable(format!(
            "{} attempts failed, last error: {last}",
            self.max_attempts
        )))
    }
}
