use std::sync::Arc;
use std::thread;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::backend::{BackendError, CompletionBackend};
use super::cache::{KeyMaterial, TranscriptCache};
use super::parse::{parse_score, CategoryLexicon, ParseError};
use super::templates::PromptBuilder;
use super::{ChatMessage, CompletionParams, Conversation, PromptError};
use crate::domain::{NewsArticle, ScoreRecord, StrategyConfig, StrategyKind};
use crate::ingest::{attribute_session, CalendarError, TradingCalendar};

/// Exponential backoff applied to transport failures and 429s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, initial_delay: Duration::from_secs(1), factor: 2 }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, initial_delay: Duration::ZERO, factor: 2 }
    }

    /// Delay after the given failed attempt (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.initial_delay * self.factor.saturating_pow(attempt.saturating_sub(1))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompleteError {
    #[error("conversation is empty")]
    EmptyConversation,
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("transport failed after {attempts} attempts: {message}")]
    TransportExhausted { attempts: u32, message: String },
    #[error("still rate limited after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error(transparent)]
    Backend(BackendError),
    #[error("cache: {0}")]
    Cache(String),
}

/// Returns the assistant reply for `conversation`, consulting the cache
/// first. Only successful, non-empty replies are cached.
pub fn chat_complete(
    conversation: &Conversation,
    params: &CompletionParams,
    backend: &dyn CompletionBackend,
    cache: Option<&TranscriptCache>,
    retry: &RetryPolicy,
) -> Result<String, CompleteError> {
    if conversation.is_empty() {
        return Err(CompleteError::EmptyConversation);
    }
    let material = KeyMaterial::new(conversation, params);
    if let Some(cache) = cache {
        if let Some(hit) = cache.get(&material).map_err(|e| CompleteError::Cache(e.to_string()))? {
            return Ok(hit.response);
        }
    }

    let mut attempt = 0;
    let reply = loop {
        attempt += 1;
        match backend.complete(conversation, params) {
            Ok(text) => break text,
            Err(e) if e.is_retryable() => {
                if attempt >= retry.max_attempts {
                    return Err(match e {
                        BackendError::RateLimited => CompleteError::RateLimitExhausted { attempts: attempt },
                        other => CompleteError::TransportExhausted {
                            attempts: attempt,
                            message: other.to_string(),
                        },
                    });
                }
                let delay = retry.delay_after(attempt);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
            }
            Err(e) => return Err(CompleteError::Backend(e)),
        }
    };
    if reply.trim().is_empty() {
        return Err(CompleteError::EmptyResponse);
    }
    if let Some(cache) = cache {
        cache.put(&material, &reply).map_err(|e| CompleteError::Cache(e.to_string()))?;
    }
    Ok(reply)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreErrorKind {
    #[error("strategy {0} is not scored by prompting")]
    NotPrompted(StrategyKind),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Complete(#[from] CompleteError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("article {article_id}: {kind}")]
pub struct ScoreError {
    pub article_id: String,
    pub kind: ScoreErrorKind,
}

/// Runs the prompt chain for one strategy against a backend.
pub struct Scorer {
    pub builder: PromptBuilder,
    pub backend: Arc<dyn CompletionBackend>,
    pub params: CompletionParams,
    pub cache: Option<TranscriptCache>,
    pub retry: RetryPolicy,
    pub lexicon: CategoryLexicon,
}

impl Scorer {
    pub fn new(builder: PromptBuilder, backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            builder,
            backend,
            params: CompletionParams::default(),
            cache: None,
            retry: RetryPolicy::default(),
            lexicon: CategoryLexicon::default(),
        }
    }

    pub fn with_cache(mut self, cache: TranscriptCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_params(mut self, params: CompletionParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn complete(&self, conv: &Conversation) -> Result<String, CompleteError> {
        chat_complete(conv, &self.params, self.backend.as_ref(), self.cache.as_ref(), &self.retry)
    }

    pub fn score_article(
        &self,
        article: &NewsArticle,
        config: &StrategyConfig,
        calendar: &TradingCalendar,
    ) -> Result<ScoreRecord, ScoreError> {
        self.score_inner(article, config, calendar).map_err(|kind| ScoreError {
            article_id: article.id.clone(),
            kind,
        })
    }

    fn score_inner(
        &self,
        article: &NewsArticle,
        config: &StrategyConfig,
        calendar: &TradingCalendar,
    ) -> Result<ScoreRecord, ScoreErrorKind> {
        let kind = config.kind;
        if !kind.is_prompted() {
            return Err(ScoreErrorKind::NotPrompted(kind));
        }
        let attributed_date = attribute_session(article.timestamp, calendar, config.cutoff)?;

        let mut conv = self.builder.build(article, kind, 1, None)?;
        let first = self.complete(&conv)?;
        let category = match kind {
            StrategyKind::Classify | StrategyKind::Car => Some(self.lexicon.parse(&first)?),
            _ => None,
        };

        let (score, explanation) = if PromptBuilder::steps(kind) == Some(2) {
            conv = self.builder.build(article, kind, 2, Some(&first))?;
            let revised = self.complete(&conv)?;
            let score = parse_score(&revised)?;
            conv.push(ChatMessage::assistant(revised.clone()));
            (score, format!("{first}\n\n---\n\n{revised}"))
        } else {
            let score = parse_score(&first)?;
            conv.push(ChatMessage::assistant(first.clone()));
            (score, first)
        };

        Ok(ScoreRecord {
            article_id: article.id.clone(),
            strategy: kind,
            category,
            score,
            explanation,
            attributed_date,
            transcript_hash: transcript_hash(&conv),
        })
    }
}

/// Hex SHA-256 of the canonical JSON form of the full conversation.
pub fn transcript_hash(conversation: &Conversation) -> String {
    let bytes = serde_json::to_vec(conversation).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    /// Fails with the queued errors first, then answers `reply`.
    struct Flaky {
        failures: Mutex<Vec<BackendError>>,
        reply: String,
        calls: std::sync::atomic::AtomicUsize,
    }

    impl Flaky {
        fn new(failures: Vec<BackendError>, reply: &str) -> Self {
            Self { failures: Mutex::new(failures), reply: reply.into(), calls: Default::default() }
        }
    }

    impl CompletionBackend for Flaky {
        fn complete(&self, _: &Conversation, _: &CompletionParams) -> Result<String, BackendError> {
            self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let mut f = self.failures.lock().unwrap();
            if f.is_empty() {
                Ok(self.reply.clone())
            } else {
                Err(f.remove(0))
            }
        }

        fn calls(&self) -> usize {
            self.calls.load(std::sync::atomic::Ordering::SeqCst)
        }
    }

    fn conv() -> Conversation {
        Conversation(vec![ChatMessage::user("hello")])
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let secs: Vec<u64> = (1..=4).map(|a| p.delay_after(a).as_secs()).collect();
        assert_eq!(secs, [1, 2, 4, 8]);
    }

    #[test]
    fn retries_then_succeeds() {
        let b = Flaky::new(
            vec![BackendError::Transport("reset".into()), BackendError::RateLimited],
            "ok [0.1]",
        );
        let out = chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5));
        assert_eq!(out.unwrap(), "ok [0.1]");
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn transport_exhaustion_reports_attempts() {
        let b = Flaky::new(vec![BackendError::Transport("down".into()); 10], "never");
        let err = chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5))
            .unwrap_err();
        assert!(matches!(err, CompleteError::TransportExhausted { attempts: 5, .. }));
        assert_eq!(b.calls(), 5);

        let b = Flaky::new(vec![BackendError::RateLimited; 10], "never");
        let err = chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(3))
            .unwrap_err();
        assert_eq!(err, CompleteError::RateLimitExhausted { attempts: 3 });
    }

    #[test]
    fn non_retryable_and_empty() {
        let b = Flaky::new(vec![BackendError::Status { status: 401, body: "no".into() }], "x");
        let err = chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5))
            .unwrap_err();
        assert!(matches!(err, CompleteError::Backend(BackendError::Status { status: 401, .. })));
        assert_eq!(b.calls(), 1);

        let b = Flaky::new(vec![], "   ");
        assert_eq!(
            chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5)),
            Err(CompleteError::EmptyResponse)
        );
        assert_eq!(
            chat_complete(&Conversation::default(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5)),
            Err(CompleteError::EmptyConversation)
        );
    }

    #[test]
    fn cache_hit_skips_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::new(dir.path());
        let b = Flaky::new(vec![], "cached reply");
        let p = CompletionParams::default();
        let r = RetryPolicy::no_delay(5);
        assert_eq!(chat_complete(&conv(), &p, &b, Some(&cache), &r).unwrap(), "cached reply");
        assert_eq!(chat_complete(&conv(), &p, &b, Some(&cache), &r).unwrap(), "cached reply");
        assert_eq!(b.calls(), 1);
    }

    #[cfg(feature = "http")]
    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        use crate::prompt::HttpBackend;
        // port 9 on localhost: nothing listens, connection is refused immediately
        let b = HttpBackend::new("http://127.0.0.1:9/v1/chat/completions", None, Duration::from_secs(2));
        let err = chat_complete(&conv(), &CompletionParams::default(), &b, None, &RetryPolicy::no_delay(5))
            .unwrap_err();
        assert!(matches!(err, CompleteError::TransportExhausted { attempts: 5, .. }), "{err}");
        assert_eq!(b.calls(), 5);
    }
}
