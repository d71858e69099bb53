//! Price and news loaders, the trading calendar, and session attribution.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Cutoff, DomainError, NewsArticle, PriceBar, PriceSeries};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: DomainError,
    },
    #[error("line {line}: dates out of order ({prev} then {next})")]
    OutOfOrder {
        line: usize,
        prev: NaiveDate,
        next: NaiveDate,
    },
    #[error("line {line}: duplicate article id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: timestamp {ts:?} has no timezone offset")]
    MissingTimezone { line: usize, ts: String },
    #[error("file contains no records")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalendarError {
    #[error("trading calendar is empty")]
    Empty,
    #[error("no trading day on or after {0} in the calendar")]
    BeyondHorizon(NaiveDate),
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct PriceRow {
    date: String,
    close: String,
}

pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries, IngestError> {
    parse_price_csv(&read(path.as_ref())?)
}

/// Parses a headered `date,close` CSV. Line numbers in errors are 1-based
/// and count the header.
pub fn parse_price_csv(input: &str) -> Result<PriceSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["date", "close"] {
        return Err(IngestError::Parse {
            line: 1,
            message: format!("expected header `date,close`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut bars: Vec<PriceBar> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = PriceRow { date: record[0].to_string(), close: record[1].to_string() };
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            IngestError::Parse { line, message: format!("bad date {:?}: {e}", row.date) }
        })?;
        let close: f64 = row.close.parse().map_err(|e| IngestError::Parse {
            line,
            message: format!("bad close {:?}: {e}", row.close),
        })?;
        let bar = PriceBar::new(date, close).map_err(|source| IngestError::Invalid { line, source })?;
        if let Some(prev) = bars.last() {
            if bar.date <= prev.date {
                return Err(IngestError::OutOfOrder { line, prev: prev.date, next: bar.date });
            }
        }
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(PriceSeries::new(bars).expect("validated row by row"))
}

pub fn write_price_csv(series: &PriceSeries) -> String {
    let mut out = String::from("date,close\n");
    for bar in series.bars() {
        out.push_str(&format!("{},{}\n", bar.date, bar.close));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct NewsLine {
    id: String,
    ts: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

pub fn load_news(path: impl AsRef<Path>) -> Result<Vec<NewsArticle>, IngestError> {
    parse_news_jsonl(&read(path.as_ref())?)
}

fn parse_timestamp(line: usize, ts: &str) -> Result<DateTime<FixedOffset>, IngestError> {
    DateTime::parse_from_rfc3339(ts).map_err(|e| {
        let naive = chrono::NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S").is_ok()
            || chrono::NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M:%S").is_ok()
            || chrono::NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M").is_ok()
            || chrono::NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M").is_ok();
        if naive {
            IngestError::MissingTimezone { line, ts: ts.to_string() }
        } else {
            IngestError::Parse { line, message: format!("bad timestamp {ts:?}: {e}") }
        }
    })
}

/// Parses one JSON object per line. Blank lines are skipped. The result is
/// sorted by (timestamp, id).
pub fn parse_news_jsonl(input: &str) -> Result<Vec<NewsArticle>, IngestError> {
    let mut seen = HashSet::new();
    let mut articles = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: NewsLine = serde_json::from_str(raw)
            .map_err(|e| IngestError::Parse { line, message: e.to_string() })?;
        let ts = parse_timestamp(line, &rec.ts)?;
        if !seen.insert(rec.id.clone()) {
            return Err(IngestError::DuplicateId { line, id: rec.id });
        }
        let article = NewsArticle::new(rec.id, ts, rec.text, rec.source)
            .map_err(|source| IngestError::Invalid { line, source })?;
        articles.push(article);
    }
    sort_articles(&mut articles);
    Ok(articles)
}

pub fn sort_articles(articles: &mut [NewsArticle]) {
    articles.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

pub fn write_news_jsonl(articles: &[NewsArticle]) -> String {
    let mut out = String::new();
    for a in articles {
        let line = NewsLine {
            id: a.id.clone(),
            ts: a.timestamp.to_rfc3339(),
            text: a.text.clone(),
            source: a.source.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

/// The set of tradable dates, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn from_series(series: &PriceSeries) -> Self {
        Self { dates: series.bars().iter().map(|b| b.date).collect() }
    }

    pub fn from_dates(mut dates: Vec<NaiveDate>) -> Result<Self, CalendarError> {
        dates.sort();
        dates.dedup();
        if dates.is_empty() {
            return Err(CalendarError::Empty);
        }
        Ok(Self { dates })
    }

    /// Monday to Friday between `start` and `end` inclusive. Used when no
    /// price file is at hand.
    pub fn weekdays(start: NaiveDate, end: NaiveDate) -> Result<Self, CalendarError> {
        let mut dates = Vec::new();
        let mut d = start;
        while d <= end {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                dates.push(d);
            }
            d += Duration::days(1);
        }
        Self::from_dates(dates)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }

    pub fn first(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    pub fn next_on_or_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        let i = self.dates.partition_point(|d| *d < date);
        self.dates.get(i).copied()
    }

    pub fn next_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        let i = self.dates.partition_point(|d| *d <= date);
        self.dates.get(i).copied()
    }
}

/// Maps a publication time to the trading day whose close it can affect.
///
/// Same calendar day when that day trades and the local time is at or
/// before the cutoff, otherwise the next trading day strictly after.
pub fn attribute_session(
    timestamp: DateTime<FixedOffset>,
    calendar: &TradingCalendar,
    cutoff: Cutoff,
) -> Result<NaiveDate, CalendarError> {
    let local = timestamp.with_timezone(&cutoff.offset);
    let date = local.date_naive();
    if calendar.contains(date) && local.time() <= cutoff.time {
        return Ok(date);
    }
    calendar.next_after(date).ok_or(CalendarError::BeyondHorizon(date))
}
