//! Prompt construction, completion backends, response parsing and the
//! transcript cache.

mod backend;
mod cache;
mod parse;
mod scorer;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendError, CompletionBackend, StubBackend, StubRule, StubStep};
#[cfg(feature = "http")]
pub use backend::HttpBackend;
pub use cache::{CacheEntry, KeyMaterial, TranscriptCache};
pub use parse::{format_score, parse_category, parse_score, CategoryLexicon, ParseError};
pub use scorer::{
    chat_complete, transcript_hash, CompleteError, RetryPolicy, ScoreError, ScoreErrorKind, Scorer,
};
pub use templates::{Language, PromptBuilder, TemplateError, TemplateSet};

use crate::domain::StrategyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Conversation(pub Vec<ChatMessage>);

impl Conversation {
    pub fn messages(&self) -> &[ChatMessage] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, message: ChatMessage) {
        self.0.push(message);
    }

    pub fn user_turns(&self) -> usize {
        self.0.iter().filter(|m| m.role == Role::User).count()
    }

    pub fn last_assistant(&self) -> Option<&str> {
        self.0
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }
}

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub presence_penalty: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: 1024,
            presence_penalty: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("strategy {kind} has no prompt step {step}")]
    InvalidStep { kind: StrategyKind, step: u8 },
    #[error("step 2 of {0} needs the assistant reply from step 1")]
    MissingFirstReply(StrategyKind),
}
