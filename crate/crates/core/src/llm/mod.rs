//! Chat-completion abstraction used by the therapy and critic agents.

pub mod mock;
mod softmax;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendFailure;
use crate::model::AgentRole;

pub use softmax::{argmax_set, softmax_temperature};

pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable ({0})")]
    BackendUnavailable(BackendFailure),
    #[error("model returned an empty response")]
    ResponseEmpty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: ChatRole::System, content: content.into() }
    }

    pub fn human(content: impl Into<String>) -> Self {
        Self { role: ChatRole::Human, content: content.into() }
    }
}

/// Identifies which agent step issued a request. Remote backends ignore it;
/// scripted backends key their replies on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestTag {
    pub role: AgentRole,
    pub round: u32,
    /// Zero for the first try, incremented on each parse retry.
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    messages: Vec<ChatMessage>,
    temperature: f64,
    tag: RequestTag,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>, temperature: f64, tag: RequestTag) -> Result<Self, LlmError> {
        match messages.first() {
            Some(m) if m.role == ChatRole::System => {}
            _ => return Err(LlmError::InvalidRequest("first message must be a system message".into())),
        }
        if let Some(i) = messages.iter().position(|m| m.content.trim().is_empty()) {
            return Err(LlmError::InvalidRequest(format!("message {i} is empty")));
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {temperature} outside [0, 2]")));
        }
        Ok(Self { messages, temperature, tag })
    }

    /// System + human pair.
    pub fn pair(system: &str, human: &str, temperature: f64, tag: RequestTag) -> Result<Self, LlmError> {
        Self::new(vec![ChatMessage::system(system), ChatMessage::human(human)], temperature, tag)
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn tag(&self) -> RequestTag {
        self.tag
    }
}

/// A chat model. Implementations must tolerate concurrent calls.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Sends `request` and rejects blank replies.
pub async fn complete(request: &ChatRequest, backend: &dyn ChatBackend) -> Result<String, LlmError> {
    let text = backend.complete(request).await?;
    if text.trim().is_empty() {
        return Err(LlmError::ResponseEmpty);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag() -> RequestTag {
        RequestTag { role: AgentRole::Critic, round: 1, attempt: 0 }
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::pair("sys", "hi", 0.3, tag()).is_ok());
        assert!(ChatRequest::new(vec![ChatMessage::human("hi")], 0.3, tag()).is_err());
        assert!(ChatRequest::pair("sys", " ", 0.3, tag()).is_err());
        assert!(ChatRequest::pair("sys", "hi", 2.5, tag()).is_err());
        assert!(ChatRequest::pair("sys", "hi", -0.1, tag()).is_err());
    }
}
