use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ChatMessage, Conversation, PromptError};
use crate::domain::{Category, NewsArticle, StrategyKind};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template {name} is missing the {{news_text}} placeholder")]
    MissingNewsText { name: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    English,
    Chinese,
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::English),
            "zh" | "chinese" => Ok(Language::Chinese),
            other => Err(format!("unknown template language {other:?}")),
        }
    }
}

/// The three prompt texts. `{news_text}` and `{category_list}` are
/// substituted in a single pass, so braces inside the news are left alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub language: Language,
    pub one_step: String,
    pub classify: String,
    pub rethink: String,
}

impl TemplateSet {
    pub fn english() -> Self {
        Self {
            language: Language::English,
            one_step: include_str!("../../templates/en/one_step.txt").to_string(),
            classify: include_str!("../../templates/en/classify.txt").to_string(),
            rethink: include_str!("../../templates/en/rethink.txt").to_string(),
        }
    }

    pub fn chinese() -> Self {
        Self {
            language: Language::Chinese,
            one_step: include_str!("../../templates/zh/one_step.txt").to_string(),
            classify: include_str!("../../templates/zh/classify.txt").to_string(),
            rethink: include_str!("../../templates/zh/rethink.txt").to_string(),
        }
    }

    pub fn builtin(language: Language) -> Self {
        match language {
            Language::English => Self::english(),
            Language::Chinese => Self::chinese(),
        }
    }

    /// Reads `one_step.txt`, `classify.txt` and `rethink.txt` from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>, language: Language) -> Result<Self, TemplateError> {
        let dir = dir.as_ref();
        let load = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let set = Self {
            language,
            one_step: load("one_step.txt")?,
            classify: load("classify.txt")?,
            rethink: load("rethink.txt")?,
        };
        if !set.one_step.contains("{news_text}") {
            return Err(TemplateError::MissingNewsText { name: "one_step" });
        }
        if !set.classify.contains("{news_text}") {
            return Err(TemplateError::MissingNewsText { name: "classify" });
        }
        Ok(set)
    }

    /// Hex SHA-256 over the three templates, for pinning experiments.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.one_step, &self.classify, &self.rethink] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn category_list(&self) -> String {
        match self.language {
            Language::English => Category::ALL
                .iter()
                .map(|c| c.label())
                .collect::<Vec<_>>()
                .join("; "),
            Language::Chinese => Category::ALL
                .iter()
                .map(|c| c.label_zh())
                .collect::<Vec<_>>()
                .join("；"),
        }
    }
}

fn render(template: &str, news_text: &str, category_list: &str) -> String {
    let mut out = String::with_capacity(template.len() + news_text.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        if let Some(after) = tail.strip_prefix("{news_text}") {
            out.push_str(news_text);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{category_list}") {
            out.push_str(category_list);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Builds the conversation for each (strategy, step) pair.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: TemplateSet,
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Number of model calls `kind` needs per article.
    pub fn steps(kind: StrategyKind) -> Option<u8> {
        match kind {
            StrategyKind::OneStep | StrategyKind::Classify => Some(1),
            StrategyKind::Car | StrategyKind::RethinkOnly => Some(2),
            StrategyKind::RandomBaseline | StrategyKind::BuyAndHold => None,
        }
    }

    fn first_prompt(&self, article: &NewsArticle, kind: StrategyKind) -> String {
        let t = &self.templates;
        let template = match kind {
            StrategyKind::Classify | StrategyKind::Car => &t.classify,
            _ => &t.one_step,
        };
        render(template, &article.text, &t.category_list())
    }

    /// Step 1 is a single user turn. Step 2 (CAR, rethink-only) replays
    /// step 1, the assistant's first reply, and then the rethink request.
    pub fn build(
        &self,
        article: &NewsArticle,
        kind: StrategyKind,
        step: u8,
        first_reply: Option<&str>,
    ) -> Result<Conversation, PromptError> {
        let max = Self::steps(kind).ok_or(PromptError::InvalidStep { kind, step })?;
        if step == 0 || step > max {
            return Err(PromptError::InvalidStep { kind, step });
        }
        let mut conv = Conversation(vec![ChatMessage::user(self.first_prompt(article, kind))]);
        if step == 2 {
            let reply = first_reply.ok_or(PromptError::MissingFirstReply(kind))?;
            conv.push(ChatMessage::assistant(reply));
            conv.push(ChatMessage::user(self.templates.rethink.clone()));
        }
        Ok(conv)
    }
}
