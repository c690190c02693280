//! Chat-completion client used as a policy backend for every role.

use std::thread;
use std::time::Duration;

use log::debug;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{render_prompt, ActionSample, BackendError, PolicyBackend};
use crate::trace::{Observation, Role};

/// Environment variable holding the bearer token.
pub const TOKEN_ENV_VAR: &str = "RAG_ORCHESTRA_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    content: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, token: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(RemoteBackend { config, token, client })
    }

    /// Reads the token from [`TOKEN_ENV_VAR`] if set.
    pub fn from_env(config: RemoteConfig) -> Result<Self, BackendError> {
        Self::new(config, std::env::var(TOKEN_ENV_VAR).ok())
    }

    fn body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Attempt> {
        let mut req = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        debug!(
            "POST {} auth={} body={}",
            self.config.endpoint_url,
            if self.token.is_some() { "Bearer ***" } else { "none" },
            body
        );
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        debug!("response status={} body={}", status, text);
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!("HTTP {status}")));
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("malformed response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal("response has no choices".into()))
    }

    /// One chat round trip with exponential backoff between retries.
    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = self.body(prompt);
        let mut delay = self.config.backoff_ms;
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(delay));
                delay = delay.saturating_mul(2);
            }
            match self.attempt(&body) {
                Ok(content) => return Ok(content),
                Err(Attempt::Fatal(e)) => return Err(BackendError::Unavailable(e)),
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(BackendError::Unavailable(last))
    }
}

impl PolicyBackend for RemoteBackend {
    fn supports(&self, role: Role) -> bool {
        role != Role::RA
    }

    fn act(&self, role: Role, obs: &Observation, _rng: &mut dyn RngCore) -> Result<ActionSample, BackendError> {
        let prompt = render_prompt(role, obs)?;
        self.complete(&prompt).map(ActionSample::text)
    }
}
