//! Deterministic scripted backends for tests and offline runs.
//!
//! A [`MockScript`] is a JSON document:
//!
//! ```json
//! {
//!   "responses": { "q1": { "1": "... \\boxed{A}", "2": "... \\boxed{B}", "*": "..." } },
//!   "relevance": { "q1": ["['Math', 'Law']"] },
//!   "generation": [ { "contains": "Law domain", "response": "I. Solver ..." } ],
//!   "failures": { "q1": { "2": 1 } },
//!   "fallback": "synthetic",
//!   "delay_ms": 0
//! }
//! ```
//!
//! Agent calls resolve by `(instance_id, agent_index)`, falling back to the
//! instance's `"*"` entry and then to `fallback`. Relevance calls pick the
//! entry for their attempt number (the last one repeats). `failures` makes
//! the first N calls for an agent fail with a retryable transport error.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokens::split_tokens;
use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, RequestTag};
use crate::types::{option_letter, TaskDomain};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Unscripted calls are a terminal error.
    #[default]
    None,
    /// Unscripted calls get a response derived from a hash of the prompt.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRule {
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub responses: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub relevance: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub generation: Vec<PromptRule>,
    #[serde(default)]
    pub failures: BTreeMap<String, BTreeMap<String, u32>>,
    #[serde(default)]
    pub fallback: Fallback,
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Sets the response for one agent of one instance.
    pub fn respond(
        mut self,
        instance_id: &str,
        agent_index: usize,
        text: impl Into<String>,
    ) -> Self {
        self.responses
            .entry(instance_id.to_string())
            .or_default()
            .insert(agent_index.to_string(), text.into());
        self
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }
}

/// Backend answering from a [`MockScript`]. Records every request it sees.
#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    model: String,
    calls: Mutex<Vec<ChatRequest>>,
    failed: Mutex<HashMap<(String, String), u32>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            model: "mock".into(),
            calls: Mutex::new(Vec::new()),
            failed: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    fn should_fail(&self, instance_id: &str, agent_index: usize) -> bool {
        let key = agent_index.to_string();
        let Some(limit) = self
            .script
            .failures
            .get(instance_id)
            .and_then(|m| m.get(&key))
        else {
            return false;
        };
        let mut failed = self.failed.lock().unwrap();
        let n = failed.entry((instance_id.to_string(), key)).or_insert(0);
        if *n < *limit {
            *n += 1;
            true
        } else {
            false
        }
    }

    fn resolve(&self, req: &ChatRequest) -> Result<String, BackendError> {
        match &req.tag {
            Some(RequestTag::Agent {
                instance_id,
                agent_index,
                n_options,
            }) => {
                if self.should_fail(instance_id, *agent_index) {
                    return Err(BackendError::Transport("scripted failure".into()));
                }
                let scripted = self
                    .script
                    .responses
                    .get(instance_id)
                    .and_then(|m| m.get(&agent_index.to_string()).or_else(|| m.get("*")));
                match (scripted, self.script.fallback) {
                    (Some(text), _) => Ok(text.clone()),
                    (None, Fallback::Synthetic) => Ok(synthetic_agent_text(req, *n_options)),
                    (None, Fallback::None) => Err(BackendError::Script(format!(
                        "no response for instance {instance_id:?} agent {agent_index}"
                    ))),
                }
            }
            Some(RequestTag::Relevance {
                instance_id,
                attempt,
            }) => {
                let scripted = self
                    .script
                    .relevance
                    .get(instance_id)
                    .and_then(|v| v.get(*attempt as usize).or(v.last()));
                match (scripted, self.script.fallback) {
                    (Some(text), _) => Ok(text.clone()),
                    (None, Fallback::Synthetic) => Ok(synthetic_relevance_text(req)),
                    (None, Fallback::None) => Err(BackendError::Script(format!(
                        "no relevance response for instance {instance_id:?}"
                    ))),
                }
            }
            Some(RequestTag::RoleGeneration) | None => self
                .script
                .generation
                .iter()
                .find(|r| req.user_prompt.contains(&r.contains))
                .map(|r| r.response.clone())
                .ok_or_else(|| BackendError::Script("no generation rule matched prompt".into())),
        }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.lock().unwrap().push(request.clone());
        if self.script.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.script.delay_ms));
        }
        let text = self.resolve(request)?;
        let (reasoning_tokens, answer_tokens) = split_tokens(&text, None);
        Ok(ChatResponse {
            full_text: text,
            reasoning_tokens,
            answer_tokens,
            latency_ms: 0,
        })
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

fn prompt_digest(req: &ChatRequest) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(req.system_prompt.as_bytes());
    h.update([0u8]);
    h.update(req.user_prompt.as_bytes());
    h.finalize().into()
}

fn synthetic_agent_text(req: &ChatRequest, n_options: usize) -> String {
    let d = prompt_digest(req);
    let letter = option_letter(d[0] as usize % n_options.max(1));
    format!(
        "<think>weighing the options, trace {}</think> Considering each option in turn, \
         the evidence points one way. My answer is \\boxed{{{letter}}}",
        hex::encode(&d[1..5])
    )
}

fn synthetic_relevance_text(req: &ChatRequest) -> String {
    let d = prompt_digest(req);
    let mut picked: Vec<&str> = Vec::new();
    let want = 2 + (d[0] as usize % 2);
    let mut i = 1;
    while picked.len() < want {
        let name = TaskDomain::ALL[d[i] as usize % 4].name();
        if !picked.contains(&name) {
            picked.push(name);
        }
        i += 1;
        if i >= d.len() {
            for dom in TaskDomain::ALL {
                if picked.len() < want && !picked.contains(&dom.name()) {
                    picked.push(dom.name());
                }
            }
        }
    }
    let quoted: Vec<String> = picked.iter().map(|p| format!("'{p}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// Backend defined by a closure; handy for one-off test behaviour.
pub struct FnBackend<F> {
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, BackendError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, BackendError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (self.f)(request)
    }

    fn model_name(&self) -> &str {
        "fn"
    }
}
