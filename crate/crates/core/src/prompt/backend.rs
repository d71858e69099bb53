use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use super::parse::{format_score, parse_score};
use super::{CompletionParams, Conversation, Role};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("no stub rule matches the conversation")]
    NoStubRule,
    #[error("{0}")]
    Config(String),
}

impl BackendError {
    /// Only transport failures and 429s are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited)
    }
}

/// Anything that turns a conversation into the next assistant message.
pub trait CompletionBackend: Send + Sync {
    fn complete(
        &self,
        conversation: &Conversation,
        params: &CompletionParams,
    ) -> Result<String, BackendError>;

    /// Requests sent so far, successful or not.
    fn calls(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubStep {
    Any,
    First,
    Second,
}

/// `pattern` is matched case-insensitively against the first user message;
/// `*` matches everything and `a & b` requires both substrings. `{prev_score}` in `response` expands to the score
/// of the previous assistant reply, e.g. `0.5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubRule {
    pub step: StubStep,
    pub pattern: String,
    pub response: String,
}

/// Deterministic offline backend driven by pattern rules. First match wins.
#[derive(Debug, Default)]
pub struct StubBackend {
    rules: Vec<StubRule>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new(rules: Vec<StubRule>) -> Self {
        Self { rules, calls: AtomicUsize::new(0) }
    }

    /// Rule file: one rule per line, `step | pattern | response`, where
    /// step is `1`, `2` or `*`. `#` starts a comment line and `\n` in the
    /// response is a newline.
    pub fn parse_rules(input: &str) -> Result<Self, BackendError> {
        let mut rules = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.splitn(3, '|');
            let (Some(step), Some(pattern), Some(response)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(BackendError::Config(format!(
                    "stub rules line {}: expected `step | pattern | response`",
                    idx + 1
                )));
            };
            let step = match step.trim() {
                "*" => StubStep::Any,
                "1" => StubStep::First,
                "2" => StubStep::Second,
                other => {
                    return Err(BackendError::Config(format!(
                        "stub rules line {}: bad step {other:?}",
                        idx + 1
                    )))
                }
            };
            rules.push(StubRule {
                step,
                pattern: pattern.trim().to_lowercase(),
                response: response.trim().replace("\\n", "\n"),
            });
        }
        Ok(Self::new(rules))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_rules(&text)
    }

    pub fn rules(&self) -> &[StubRule] {
        &self.rules
    }
}

impl CompletionBackend for StubBackend {
    fn complete(
        &self,
        conversation: &Conversation,
        _params: &CompletionParams,
    ) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let first_user = conversation
            .messages()
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.to_lowercase())
            .unwrap_or_default();
        let step = conversation.user_turns();
        let rule = self
            .rules
            .iter()
            .find(|r| {
                let step_ok = match r.step {
                    StubStep::Any => true,
                    StubStep::First => step == 1,
                    StubStep::Second => step == 2,
                };
                step_ok
                    && (r.pattern == "*"
                        || r.pattern.split('&').all(|p| first_user.contains(p.trim())))
            })
            .ok_or(BackendError::NoStubRule)?;

        if !rule.response.contains("{prev_score}") {
            return Ok(rule.response.clone());
        }
        let prev = conversation
            .last_assistant()
            .ok_or_else(|| BackendError::Config("{prev_score} used without a previous reply".into()))?;
        let score = parse_score(prev).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        let bare = format_score(score);
        Ok(rule.response.replace("{prev_score}", &bare[1..bare.len() - 1]))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(feature = "http")]
pub use http::HttpBackend;

#[cfg(feature = "http")]
mod http {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    use serde_json::{json, Value};

    use super::{BackendError, CompletionBackend};
    use crate::prompt::{CompletionParams, Conversation};

    /// Messages-style chat-completion endpoint (OpenAI wire format).
    pub struct HttpBackend {
        url: String,
        api_key: Option<String>,
        agent: ureq::Agent,
        calls: AtomicUsize,
    }

    impl HttpBackend {
        pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into();
            Self { url: url.into(), api_key, agent, calls: AtomicUsize::new(0) }
        }

        /// Reads `CAR_API_URL` and `CAR_API_KEY`.
        pub fn from_env() -> Result<Self, BackendError> {
            let url = std::env::var("CAR_API_URL")
                .map_err(|_| BackendError::Config("CAR_API_URL is not set".into()))?;
            let key = std::env::var("CAR_API_KEY").ok();
            Ok(Self::new(url, key, Duration::from_secs(120)))
        }
    }

    impl CompletionBackend for HttpBackend {
        fn complete(
            &self,
            conversation: &Conversation,
            params: &CompletionParams,
        ) -> Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let body = json!({
                "model": params.model,
                "messages": conversation.messages(),
                "temperature": params.temperature,
                "max_tokens": params.max_tokens,
                "presence_penalty": params.presence_penalty,
            });
            let mut req = self.agent.post(&self.url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(&body)
                .map_err(|e| BackendError::Transport(e.to_string()))?;
            let status = resp.status().as_u16();
            if status == 429 {
                return Err(BackendError::RateLimited);
            }
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| BackendError::Transport(e.to_string()))?;
            if !(200..300).contains(&status) {
                return Err(BackendError::Status { status, body: text });
            }
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))
        }

        fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }
}
