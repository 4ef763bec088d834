//! Text-generation and embedding providers.
//!
//! [`ChatBackend`] is the single seam the protocol, role generation and
//! relevance analysis talk to. Two implementations ship: [`HttpBackend`]
//! for OpenAI-compatible chat-completion endpoints and [`MockBackend`]
//! driven by a JSON script. Embedders live in [`embed`].

pub mod embed;
pub mod http;
pub mod mock;
pub mod tokens;

use serde::{Deserialize, Serialize};

pub use embed::{Embedder, EmbeddingVector, HashEmbedder, HttpEmbedder};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{FnBackend, MockBackend, MockScript};

pub const DEFAULT_TEMPERATURE: f64 = 0.6;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const MIN_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mock script: {0}")]
    Script(String),
    #[error("embedding batch inconsistent: {0}")]
    Embedding(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Whether another attempt could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) | Self::Timeout => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// What a request is for. Never sent over the wire; mock scripts key on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestTag {
    Agent {
        instance_id: String,
        agent_index: usize,
        n_options: usize,
    },
    Relevance {
        instance_id: String,
        attempt: u32,
    },
    RoleGeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Option<Vec<String>>,
    #[serde(skip)]
    pub tag: Option<RequestTag>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            stop: None,
            tag: None,
        }
    }

    pub fn with_sampling(mut self, sampling: &Sampling) -> Self {
        self.max_tokens = sampling.max_tokens;
        self.temperature = sampling.temperature;
        self
    }

    pub fn with_tag(mut self, tag: RequestTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest(
                "prompts must be non-empty".into(),
            ));
        }
        if self.max_tokens < MIN_MAX_TOKENS {
            return Err(BackendError::InvalidRequest(format!(
                "max_tokens {} below minimum {MIN_MAX_TOKENS}",
                self.max_tokens
            )));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Generation settings recorded alongside every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub full_text: String,
    pub reasoning_tokens: u64,
    pub answer_tokens: u64,
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn total_tokens(&self) -> u64 {
        self.reasoning_tokens + self.answer_tokens
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Model identifier recorded in run records.
    fn model_name(&self) -> &str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

/// Calls `backend`, retrying retryable failures up to `retries` extra times.
pub fn complete_with_retry<B: ChatBackend + ?Sized>(
    backend: &B,
    request: &ChatRequest,
    retries: u32,
) -> Result<ChatResponse, BackendError> {
    request.validate()?;
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.complete(request) {
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_retryable() && attempts <= retries => {
                tracing::debug!(attempt = attempts, error = %e, "retrying backend call");
            }
            Err(e) if e.is_retryable() => {
                return Err(BackendError::Exhausted {
                    attempts,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn status_classification() {
        assert!(BackendError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 401,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Timeout.is_retryable());
        assert!(!BackendError::Malformed("x".into()).is_retryable());
    }

    #[test]
    fn two_http_failures_exhaust_one_retry() {
        let calls = AtomicU32::new(0);
        let backend = FnBackend::new(|_| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Status {
                status: 500,
                body: "boom".into(),
            })
        });
        let err = complete_with_retry(&backend, &ChatRequest::new("s", "u"), 1).unwrap_err();
        assert!(matches!(err, BackendError::Exhausted { attempts: 2, .. }));
        assert!(!err.is_retryable());
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn terminal_errors_are_not_retried() {
        let calls = AtomicU32::new(0);
        let backend = FnBackend::new(|_| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Status {
                status: 400,
                body: "bad".into(),
            })
        });
        assert!(complete_with_retry(&backend, &ChatRequest::new("s", "u"), 1).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn one_failure_then_success() {
        let calls = AtomicU32::new(0);
        let backend = FnBackend::new(|_| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(BackendError::Transport("reset".into()))
            } else {
                Ok(ChatResponse {
                    full_text: "ok".into(),
                    reasoning_tokens: 0,
                    answer_tokens: 1,
                    latency_ms: 0,
                })
            }
        });
        assert_eq!(
            complete_with_retry(&backend, &ChatRequest::new("s", "u"), 1)
                .unwrap()
                .full_text,
            "ok"
        );
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new("", "u").validate().is_err());
        let mut r = ChatRequest::new("s", "u");
        r.max_tokens = 10;
        assert!(r.validate().is_err());
        r.max_tokens = 64;
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }
}
