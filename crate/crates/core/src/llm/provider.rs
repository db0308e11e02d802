//! LLM backends: a chat-completions HTTP client, digest-keyed replay, and an
//! in-memory queue.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, ProviderError, Result};
use crate::llm::prompts::ChatRequest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Total tokens reported by the backend; 0 when unknown.
    pub tokens: u64,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tokens: 0,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError>;

    /// Whether several requests may be in flight at once without changing
    /// results. Stateful providers answer in call order and must say no.
    fn concurrent(&self) -> bool {
        false
    }
}

/// Hex SHA-256 over `system`, a 0x1F separator byte, and `user`.
pub fn request_digest(req: &ChatRequest) -> String {
    let mut h = Sha256::new();
    h.update(req.system.as_bytes());
    h.update([0x1f]);
    h.update(req.user.as_bytes());
    hex::encode(h.finalize())
}

/// Pops queued responses in order.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedProvider {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, _req: &ChatRequest) -> Result<Completion, ProviderError> {
        self.queue
            .lock()
            .expect("queue lock")
            .pop_front()
            .map(Completion::text)
            .ok_or(ProviderError::QueueEmpty)
    }
}

/// One replay entry: a fixed response, or a list consumed in call order with
/// the last element repeating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayEntry {
    One(String),
    Sequence(Vec<String>),
}

/// Answers from a JSON map of request digest to response.
#[derive(Debug)]
pub struct ReplayProvider {
    script: BTreeMap<String, ReplayEntry>,
    calls: Mutex<HashMap<String, usize>>,
}

impl ReplayProvider {
    pub fn new(script: BTreeMap<String, ReplayEntry>) -> Self {
        Self {
            script,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        serde_json::from_str(text)
            .map(Self::new)
            .map_err(|e| ProviderError::Script(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_json(&text)?)
    }
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        let digest = request_digest(req);
        let entry = self
            .script
            .get(&digest)
            .ok_or_else(|| ProviderError::ReplayMiss(digest.clone()))?;
        let text = match entry {
            ReplayEntry::One(s) => s.clone(),
            ReplayEntry::Sequence(list) => {
                let mut calls = self.calls.lock().expect("replay lock");
                let n = calls.entry(digest.clone()).or_insert(0);
                let pick = list
                    .get(*n)
                    .or_else(|| list.last())
                    .ok_or_else(|| ProviderError::Script(format!("empty sequence for {digest}")))?;
                *n += 1;
                pick.clone()
            }
        };
        Ok(Completion::text(text))
    }
}

/// Wraps a provider and records every exchange as a replay script.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<BTreeMap<String, Vec<String>>>,
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn script(&self) -> BTreeMap<String, ReplayEntry> {
        self.log
            .lock()
            .expect("recording lock")
            .iter()
            .map(|(k, v)| {
                let entry = if v.len() == 1 || v.iter().all(|s| s == &v[0]) {
                    ReplayEntry::One(v[0].clone())
                } else {
                    ReplayEntry::Sequence(v.clone())
                };
                (k.clone(), entry)
            })
            .collect()
    }

    pub fn script_json(&self) -> String {
        serde_json::to_string_pretty(&self.script()).expect("script serializes")
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        let out = self.inner.complete(req)?;
        self.log
            .lock()
            .expect("recording lock")
            .entry(request_digest(req))
            .or_default()
            .push(out.text.clone());
        Ok(out)
    }
}

/// Chat-completions client. The API key is read from an environment variable.
#[derive(Debug)]
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
    backoff: Vec<Duration>,
}

/// Delays before each retry of a transient failure.
pub fn default_backoff() -> Vec<Duration> {
    [1, 4, 16].into_iter().map(Duration::from_secs).collect()
}

impl HttpProvider {
    pub fn new(endpoint: &str, model: &str, credential_env: &str) -> Result<Self, ProviderError> {
        let api_key = std::env::var(credential_env)
            .map_err(|_| ProviderError::MissingCredential(credential_env.to_string()))?;
        Self::with_key(endpoint, model, api_key)
    }

    pub fn with_key(endpoint: &str, model: &str, api_key: String) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            backoff: default_backoff(),
        })
    }

    pub fn with_backoff(mut self, backoff: Vec<Duration>) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &Value) -> Result<Completion, (ProviderError, bool)> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| (ProviderError::Transport(e.to_string()), true))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (ProviderError::Transport(e.to_string()), true))?;
        if !status.is_success() {
            let transient = status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error();
            let body: String = text.chars().take(500).collect();
            return Err((
                ProviderError::Status {
                    status: status.as_u16(),
                    body,
                },
                transient,
            ));
        }
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| (ProviderError::Malformed(e.to_string()), false))?;
        let content = parsed
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| {
                (
                    ProviderError::Malformed("no choices[0].message.content".into()),
                    false,
                )
            })?;
        let tokens = parsed
            .pointer("/usage/total_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        Ok(Completion {
            text: content.to_string(),
            tokens,
        })
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, req: &ChatRequest) -> Result<Completion, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut delays = self.backoff.iter();
        loop {
            match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err((err, true)) => match delays.next() {
                    Some(d) => {
                        log::warn!("transient provider failure ({err}); retrying in {d:?}");
                        std::thread::sleep(*d);
                    }
                    None => return Err(err),
                },
                Err((err, false)) => return Err(err),
            }
        }
    }

    fn concurrent(&self) -> bool {
        true
    }
}

/// Provider selection as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderKind {
    Http {
        endpoint: String,
        model: String,
        credential_env: String,
    },
    Replay(PathBuf),
    Scripted(Vec<String>),
}

impl ProviderKind {
    pub fn build(&self) -> Result<Box<dyn LlmProvider>> {
        Ok(match self {
            ProviderKind::Http {
                endpoint,
                model,
                credential_env,
            } => Box::new(HttpProvider::new(endpoint, model, credential_env)?),
            ProviderKind::Replay(path) => Box::new(ReplayProvider::load(path)?),
            ProviderKind::Scripted(queue) => Box::new(ScriptedProvider::new(queue.clone())),
        })
    }
}
