//! Text-completion backends: an OpenAI-compatible HTTP client and
//! deterministic mocks.

mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{BackendConfig, HttpBackend};
pub use mock::{mock_complete, MockKind, MockSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no messages to send")]
    NoMessages,
    #[error("request failed after {attempts} attempt(s): {message}")]
    Network { attempts: usize, message: String },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("response contained no choices")]
    NoChoices,
    #[error("response content is empty")]
    EmptyContent,
    #[error("environment variable {0} with the API key is not set")]
    MissingCredential(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("mock backend: {0}")]
    Mock(String),
}

/// Anything that can turn a chat transcript into one completion.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

/// Configured backend for one role (refiner, target or judge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    Http(BackendConfig),
    Mock(MockSpec),
}

impl BackendSpec {
    pub fn build(&self) -> Result<Box<dyn ChatBackend>, BackendError> {
        Ok(match self {
            Self::Http(cfg) => Box::new(HttpBackend::new(cfg.clone())?),
            Self::Mock(spec) => {
                spec.validate()?;
                Box::new(spec.clone())
            }
        })
    }
}

impl ChatBackend for MockSpec {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        mock_complete(messages, self)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        (**self).complete(messages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_serialization() {
        let m = ChatMessage::system("be nice");
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"role":"system","content":"be nice"}"#
        );
        assert!(serde_json::from_str::<ChatMessage>(r#"{"role":"tool","content":""}"#).is_err());
    }

    #[test]
    fn backend_spec_json() {
        let spec: BackendSpec = serde_json::from_str(r#"{"mock":{"kind":"echo"}}"#).unwrap();
        let backend = spec.build().unwrap();
        assert_eq!(
            backend.complete(&[ChatMessage::user("abc")]).unwrap(),
            "abc"
        );

        let http: BackendSpec =
            serde_json::from_str(r#"{"http":{"endpoint":"http://127.0.0.1:9","model":"m"}}"#)
                .unwrap();
        match http {
            BackendSpec::Http(cfg) => {
                assert_eq!(cfg.temperature, 0.0);
                assert_eq!(cfg.max_tokens, 512);
            }
            _ => unreachable!(),
        }
    }
}
