//! Chat backends: a live HTTP chat-completion client, a replay backend
//! over recorded fixtures, and a recorder wrapping any backend.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use synthsel_core::llm::{BackendError, ChatBackend, ChatReply, Message};

/// Hex SHA-256 of the model name and the full message sequence.
pub fn replay_key(model: &str, messages: &[Message]) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        model: &'a str,
        messages: &'a [Message],
    }
    let text = serde_json::to_string(&Keyed { model, messages }).expect("messages serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// One line of a fixture file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub key_hash: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

pub fn read_fixtures(path: &Path) -> Result<Vec<Fixture>, FixtureError> {
    let io = |source| FixtureError::Io { path: path.to_path_buf(), source };
    let f = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fx = serde_json::from_str(&line)
            .map_err(|source| FixtureError::Json { path: path.to_path_buf(), line: i + 1, source })?;
        out.push(fx);
    }
    Ok(out)
}

pub fn append_fixture(path: &Path, fx: &Fixture) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(fx)?)
}

/// Answers from recorded fixtures; a later fixture with the same key wins.
#[derive(Clone, Debug, Default)]
pub struct ReplayBackend {
    fixtures: HashMap<String, Fixture>,
}

impl ReplayBackend {
    pub fn new(fixtures: impl IntoIterator<Item = Fixture>) -> Self {
        ReplayBackend { fixtures: fixtures.into_iter().map(|f| (f.key_hash.clone(), f)).collect() }
    }

    pub fn open(path: &Path) -> Result<Self, FixtureError> {
        Ok(Self::new(read_fixtures(path)?))
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, model: &str, messages: &[Message], _: f64, _: u64) -> Result<ChatReply, BackendError> {
        let key = replay_key(model, messages);
        let fx = self.fixtures.get(&key).ok_or(BackendError::ReplayMiss(key))?;
        let usage = match (fx.input_tokens, fx.output_tokens) {
            (Some(i), Some(o)) => Some((i, o)),
            _ => None,
        };
        Ok(ChatReply { text: fx.response_text.clone(), usage })
    }
}

/// Forwards to `inner` and appends every answer to a fixture file.
pub struct RecordingBackend<B> {
    pub inner: B,
    pub path: PathBuf,
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(
        &mut self,
        model: &str,
        messages: &[Message],
        timeout: f64,
        max_output_tokens: u64,
    ) -> Result<ChatReply, BackendError> {
        let reply = self.inner.complete(model, messages, timeout, max_output_tokens)?;
        let fx = Fixture {
            key_hash: replay_key(model, messages),
            response_text: reply.text.clone(),
            input_tokens: reply.usage.map(|u| u.0),
            output_tokens: reply.usage.map(|u| u.1),
        };
        append_fixture(&self.path, &fx).map_err(|e| BackendError::Transport(format!("recording fixture: {}", e)))?;
        Ok(reply)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full chat-completion URL.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Per-request cap in seconds, on top of the slice deadline.
    #[serde(default = "default_request_timeout")]
    pub request_timeout: f64,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_request_timeout() -> f64 {
    60.0
}

/// Single-turn JSON chat-completion client, no streaming.
pub struct HttpBackend {
    pub config: HttpConfig,
    key: Option<String>,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: HttpConfig) -> Self {
        let key = config.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        if config.api_key_env.is_some() && key.is_none() {
            log::warn!("environment variable {} is not set", config.api_key_env.as_deref().unwrap_or(""));
        }
        HttpBackend { config, key }
    }

    fn send(&self, body: &serde_json::Value, timeout: f64) -> Result<ChatReply, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.config.endpoint);
        if let Some(k) = &self.key {
            req = req.header("Authorization", &format!("Bearer {}", k));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout,
            e => BackendError::Transport(e.to_string()),
        })?;
        let status = resp.status();
        let v: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| BackendError::Transport(format!("bad response body: {}", e)))?;
        if !status.is_success() {
            return Err(BackendError::Transport(format!("HTTP {}: {}", status, v)));
        }
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Transport(format!("no assistant message in {}", v)))?
            .to_string();
        let usage = match (v["usage"]["prompt_tokens"].as_u64(), v["usage"]["completion_tokens"].as_u64()) {
            (Some(i), Some(o)) => Some((i, o)),
            _ => None,
        };
        Ok(ChatReply { text, usage })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &mut self,
        model: &str,
        messages: &[Message],
        timeout: f64,
        max_output_tokens: u64,
    ) -> Result<ChatReply, BackendError> {
        let body = json!({
            "model": model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": max_output_tokens,
        });
        let timeout = timeout.min(self.config.request_timeout);
        match self.send(&body, timeout) {
            Err(BackendError::Transport(e)) => {
                log::warn!("chat request failed ({}); reconnecting once", e);
                self.send(&body, timeout)
            }
            r => r,
        }
    }
}
