use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage};

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Base URL; requests go to `{endpoint}/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_backoff")]
    pub backoff_base_secs: f64,
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> usize {
    2
}

fn default_backoff() -> f64 {
    0.5
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            api_key_env: None,
            backoff_base_secs: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::Config("timeout_secs must be positive".into()));
        }
        if !(self.backoff_base_secs >= 0.0 && self.backoff_base_secs.is_finite()) {
            return Err(BackendError::Config(
                "backoff_base_secs must be >= 0".into(),
            ));
        }
        if self.endpoint.is_empty() || self.model.is_empty() {
            return Err(BackendError::Config(
                "endpoint and model are required".into(),
            ));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.endpoint.trim_end_matches('/')
        )
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Blocking OpenAI-compatible chat client. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: BackendConfig,
    client: Client,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn api_key(&self) -> Result<Option<String>, BackendError> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .ok()
                .filter(|v| !v.is_empty())
                .map(Some)
                .ok_or_else(|| BackendError::MissingCredential(var.clone())),
        }
    }

    fn attempt(&self, body: &ChatRequest<'_>, key: Option<&str>) -> Result<String, Attempt> {
        let mut request = self.client.post(self.config.url()).json(body);
        if let Some(key) = key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            Attempt::Retry(BackendError::Network {
                attempts: 1,
                message: error_chain(&e),
            })
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            Attempt::Retry(BackendError::Network {
                attempts: 1,
                message: error_chain(&e),
            })
        })?;
        if !status.is_success() {
            let err = BackendError::Status {
                status: status.as_u16(),
                body: text.chars().take(BODY_EXCERPT).collect(),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        parse_response(&text).map_err(Attempt::Fatal)
    }
}

/// Extracts `choices[0].message.content` from a response body.
pub(crate) fn parse_response(text: &str) -> Result<String, BackendError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choices = value
        .get("choices")
        .and_then(|c| c.as_array())
        .ok_or_else(|| BackendError::Malformed("missing \"choices\" array".into()))?;
    let first = choices.first().ok_or(BackendError::NoChoices)?;
    let content = first
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
    if content.trim().is_empty() {
        return Err(BackendError::EmptyContent);
    }
    Ok(content.to_string())
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::NoMessages);
        }
        let key = self.api_key()?;
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let mut delay = self.config.backoff_base_secs;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, key.as_deref()) {
                Ok(content) => return Ok(content),
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(err)) if attempts > self.config.retries => {
                    return Err(match err {
                        BackendError::Network { message, .. } => {
                            BackendError::Network { attempts, message }
                        }
                        other => other,
                    });
                }
                Err(Attempt::Retry(_)) => {
                    thread::sleep(Duration::from_secs_f64(delay));
                    delay *= 2.0;
                }
            }
        }
    }
}

/// `outer: cause: root cause`, since reqwest's own message omits the cause.
fn error_chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut source = e.source();
    while let Some(cause) = source {
        out.push_str(": ");
        out.push_str(&cause.to_string());
        source = cause.source();
    }
    out
}
