//! OpenAI-compatible chat-completion client.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::tokens::{split_tokens, ProviderUsage};
use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`. `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Bearer token; `None` sends no Authorization header.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: 600,
            max_in_flight: 8,
        }
    }
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
pub(crate) struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Gate);

impl Gate {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
    gate: Gate,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    completion_tokens: Option<u64>,
    completion_tokens_details: Option<WireDetails>,
}

#[derive(Deserialize)]
struct WireDetails {
    reasoning_tokens: Option<u64>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let gate = Gate::new(config.max_in_flight);
        Ok(Self {
            client,
            config,
            gate,
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        )
    }

    fn body(&self, req: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                { "role": "system", "content": req.system_prompt },
                { "role": "user", "content": req.user_prompt },
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        body
    }
}

pub(crate) fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else if let Some(status) = e.status() {
        BackendError::Status {
            status: status.as_u16(),
            body: e.to_string(),
        }
    } else {
        BackendError::Transport(e.to_string())
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let _permit = self.gate.acquire();
        let started = Instant::now();
        let mut rb = self.client.post(self.url()).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        let usage = wire.usage.and_then(|u| {
            u.completion_tokens.map(|total| ProviderUsage {
                completion_tokens: total,
                reasoning_tokens: u.completion_tokens_details.and_then(|d| d.reasoning_tokens),
            })
        });
        let (reasoning_tokens, answer_tokens) = split_tokens(&content, usage);
        Ok(ChatResponse {
            full_text: content,
            reasoning_tokens,
            answer_tokens,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }
}
