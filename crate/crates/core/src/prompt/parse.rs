//! Extraction of the bracketed score and the category from model replies.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::domain::{Category, Score};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no bracketed score found")]
    NoScoreFound,
    #[error("bracketed score {0} is outside [-1.05, 1.05]")]
    OutOfRange(String),
    #[error("no category name found")]
    NoCategory,
    #[error("ambiguous category: both {0} and {1} are named")]
    AmbiguousCategory(Category, Category),
}

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[\s*([+\-−]?)\s*(\d+(?:\.\d*)?|\.\d+)\s*\]").unwrap()
});

static LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:category|type|class|类别|类型|分类)\s*[:：]").unwrap()
});

const MAX_DIGITS: usize = 30;

/// Renders a score the way the prompts ask for it, e.g. `[-0.8]`.
pub fn format_score(score: Score) -> String {
    format!("[{score}]")
}

/// Returns the last bracketed decimal in `text`, snapped to the 0.1 grid.
///
/// Snapping is done on the decimal digits, so `0.65` goes to `0.7` and
/// `-0.05` to `-0.1` (ties away from zero). Values beyond ±1.05 are rejected;
/// `±1.05` itself snaps to `±1.0`.
pub fn parse_score(text: &str) -> Result<Score, ParseError> {
    let caps = BRACKETED
        .captures_iter(text)
        .last()
        .ok_or(ParseError::NoScoreFound)?;
    let negative = !caps[1].is_empty() && &caps[1] != "+";
    let raw = &caps[2];
    let shown = || format!("{}{}", if negative { "-" } else { "" }, raw);

    let (int_part, frac_part) = raw.split_once('.').unwrap_or((raw, ""));
    let int_part = int_part.trim_start_matches('0');
    let frac_part = frac_part.trim_end_matches('0');
    if int_part.len() > 3 || frac_part.len() > MAX_DIGITS {
        return Err(ParseError::OutOfRange(shown()));
    }
    let k = frac_part.len() as u32;
    let int_val: u128 = if int_part.is_empty() { 0 } else { int_part.parse().unwrap() };
    let frac_val: u128 = if frac_part.is_empty() { 0 } else { frac_part.parse().unwrap() };
    let scale = 10u128.pow(k);
    // value = mantissa / 10^k
    let mantissa = int_val * scale + frac_val;
    if mantissa * 100 > 105 * scale {
        return Err(ParseError::OutOfRange(shown()));
    }
    let tenths = if k == 0 {
        mantissa * 10
    } else {
        let unit = 10u128.pow(k - 1);
        let (q, r) = (mantissa / unit, mantissa % unit);
        if 2 * r >= unit {
            q + 1
        } else {
            q
        }
    };
    let tenths = (tenths as i32).min(10);
    let tenths = if negative { -tenths } else { tenths };
    Ok(Score::from_tenths(tenths).expect("clamped to grid"))
}

/// Phrases that identify each category, matched case-insensitively.
#[derive(Debug, Clone)]
pub struct CategoryLexicon {
    entries: Vec<(Category, Vec<String>)>,
}

impl Default for CategoryLexicon {
    fn default() -> Self {
        use Category::*;
        let table: [(Category, &[&str]); 6] = [
            (GeopoliticalEvent, &["geopolitical", "地缘政治"]),
            (
                MacroDataRelease,
                &["macroeconomic data", "macro data", "economic data release", "宏观经济数据", "宏观数据"],
            ),
            (CentralBankPolicy, &["central bank", "央行", "中央银行"]),
            (CurrencyExchangeRates, &["exchange rate", "汇率"]),
            (StockMarketFluctuations, &["stock market", "股市", "股票市场"]),
            (GoldSupplyDemand, &["supply and demand", "供需", "供求"]),
        ];
        Self {
            entries: table
                .into_iter()
                .map(|(c, words)| (c, words.iter().map(|w| w.to_string()).collect()))
                .collect(),
        }
    }
}

impl CategoryLexicon {
    pub fn with_synonym(mut self, category: Category, phrase: &str) -> Self {
        let phrase = phrase.to_lowercase();
        if let Some((_, words)) = self.entries.iter_mut().find(|(c, _)| *c == category) {
            words.push(phrase);
        }
        self
    }

    /// Categories named in `text`, ordered by first occurrence.
    fn hits(&self, text: &str) -> Vec<Category> {
        let mut found: Vec<(usize, Category)> = Vec::new();
        for (cat, words) in &self.entries {
            let first = words.iter().filter_map(|w| text.find(w.as_str())).min();
            if let Some(pos) = first {
                found.push((pos, *cat));
            }
        }
        found.sort();
        found.into_iter().map(|(_, c)| c).collect()
    }

    pub fn parse(&self, text: &str) -> Result<Category, ParseError> {
        let lower = text.to_lowercase();
        let marker = BRACKETED.find(&lower).map_or(lower.len(), |m| m.start());
        let head = &lower[..marker];

        // An explicit "Category: ..." label takes precedence over a free scan.
        if let Some(label) = LABEL.find(head) {
            let rest = &head[label.end()..];
            let end = rest.find(['\n', '.', '。', ';', '；']).unwrap_or(rest.len());
            let hits = self.hits(&rest[..end]);
            if let Some(result) = pick(&hits) {
                return result;
            }
        }
        pick(&self.hits(head)).unwrap_or(Err(ParseError::NoCategory))
    }
}

fn pick(hits: &[Category]) -> Option<Result<Category, ParseError>> {
    match hits {
        [] => None,
        [one] => Some(Ok(*one)),
        [a, b, ..] => Some(Err(ParseError::AmbiguousCategory(*a, *b))),
    }
}

/// [`CategoryLexicon::parse`] with the default English and Chinese lexicon.
pub fn parse_category(text: &str) -> Result<Category, ParseError> {
    static DEFAULT: LazyLock<CategoryLexicon> = LazyLock::new(CategoryLexicon::default);
    DEFAULT.parse(text)
}
