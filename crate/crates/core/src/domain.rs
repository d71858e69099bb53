//! Value types shared by the ingestion, scoring, signal and backtest stages.
//!
//! Everything here is validated on construction and immutable afterwards.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("score {0} is outside [-1, 1]")]
    ScoreOutOfRange(f64),
    #[error("score {0} is not a multiple of 0.1")]
    ScoreOffGrid(f64),
    #[error("article {0:?} has empty text")]
    EmptyText(String),
    #[error("article id must not be empty")]
    EmptyId,
    #[error("close price on {date} must be positive, got {close}")]
    NonPositiveClose { date: NaiveDate, close: f64 },
    #[error("price series is empty")]
    EmptySeries,
    #[error("price dates must be strictly increasing: {prev} is followed by {next}")]
    UnorderedDates { prev: NaiveDate, next: NaiveDate },
    #[error("window must be positive")]
    NonPositiveWindow,
    #[error("fee rate must be in [0, 1), got {0}")]
    InvalidFeeRate(f64),
    #[error("initial capital must be positive, got {0}")]
    NonPositiveCapital(f64),
    #[error("threshold must be finite, got {0}")]
    NonFiniteThreshold(f64),
    #[error("unknown {what} {value:?}")]
    UnknownName { what: &'static str, value: String },
    #[error("invalid cutoff {0:?}, expected HH:MM[+HH:MM]")]
    InvalidCutoff(String),
}

/// A sentiment score on the 0.1 grid in `[-1, 1]`, stored as tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(i8);

impl Score {
    pub const MIN: Score = Score(-10);
    pub const MAX: Score = Score(10);
    pub const ZERO: Score = Score(0);

    pub fn from_tenths(tenths: i32) -> Result<Self, DomainError> {
        if !(-10..=10).contains(&tenths) {
            return Err(DomainError::ScoreOutOfRange(tenths as f64 / 10.0));
        }
        Ok(Score(tenths as i8))
    }

    /// Accepts only values that already sit on the grid (up to float noise).
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() || !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&value) {
            return Err(DomainError::ScoreOutOfRange(value));
        }
        let scaled = value * 10.0;
        let rounded = scaled.round();
        if (scaled - rounded).abs() > 1e-9 {
            return Err(DomainError::ScoreOffGrid(value));
        }
        Self::from_tenths(rounded as i32)
    }

    pub fn tenths(self) -> i32 {
        self.0 as i32
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 10.0
    }

    /// All 21 grid points in ascending order.
    pub fn grid() -> impl Iterator<Item = Score> {
        (-10..=10).map(Score)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Score::new(value).map_err(serde::de::Error::custom)
    }
}

/// News categories used by the classify step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    GeopoliticalEvent,
    MacroDataRelease,
    CentralBankPolicy,
    CurrencyExchangeRates,
    StockMarketFluctuations,
    GoldSupplyDemand,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::GeopoliticalEvent,
        Category::MacroDataRelease,
        Category::CentralBankPolicy,
        Category::CurrencyExchangeRates,
        Category::StockMarketFluctuations,
        Category::GoldSupplyDemand,
    ];

    /// Human-readable English label, as listed in prompts.
    pub fn label(self) -> &'static str {
        match self {
            Category::GeopoliticalEvent => "Geopolitical event",
            Category::MacroDataRelease => "Macroeconomic data release",
            Category::CentralBankPolicy => "Central bank policy and action",
            Category::CurrencyExchangeRates => "Currency exchange rates",
            Category::StockMarketFluctuations => "Stock market fluctuations",
            Category::GoldSupplyDemand => "Gold supply and demand situation",
        }
    }

    pub fn label_zh(self) -> &'static str {
        match self {
            Category::GeopoliticalEvent => "地缘政治事件",
            Category::MacroDataRelease => "宏观经济数据发布",
            Category::CentralBankPolicy => "央行政策与行动",
            Category::CurrencyExchangeRates => "货币汇率",
            Category::StockMarketFluctuations => "股市波动",
            Category::GoldSupplyDemand => "黄金供需状况",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub text: String,
    pub source: Option<String>,
}

impl NewsArticle {
    pub fn new(
        id: impl Into<String>,
        timestamp: DateTime<FixedOffset>,
        text: impl Into<String>,
        source: Option<String>,
    ) -> Result<Self, DomainError> {
        let id = id.into();
        let text = text.into();
        if id.trim().is_empty() {
            return Err(DomainError::EmptyId);
        }
        if text.trim().is_empty() {
            return Err(DomainError::EmptyText(id));
        }
        Ok(Self {
            id,
            timestamp,
            text,
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub close: f64,
}

impl PriceBar {
    pub fn new(date: NaiveDate, close: f64) -> Result<Self, DomainError> {
        if !(close.is_finite() && close > 0.0) {
            return Err(DomainError::NonPositiveClose { date, close });
        }
        Ok(Self { date, close })
    }
}

/// Daily closes with strictly increasing dates. Never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    bars: Vec<PriceBar>,
}

impl PriceSeries {
    pub fn new(bars: Vec<PriceBar>) -> Result<Self, DomainError> {
        if bars.is_empty() {
            return Err(DomainError::EmptySeries);
        }
        for bar in &bars {
            PriceBar::new(bar.date, bar.close)?;
        }
        for pair in bars.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(DomainError::UnorderedDates {
                    prev: pair[0].date,
                    next: pair[1].date,
                });
            }
        }
        Ok(Self { bars })
    }

    pub fn bars(&self) -> &[PriceBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first(&self) -> &PriceBar {
        &self.bars[0]
    }

    pub fn last(&self) -> &PriceBar {
        &self.bars[self.bars.len() - 1]
    }

    pub fn close_on(&self, date: NaiveDate) -> Option<f64> {
        self.bars
            .binary_search_by_key(&date, |b| b.date)
            .ok()
            .map(|i| self.bars[i].close)
    }

    /// Bars with `start <= date <= end`; `None` bounds are open.
    pub fn slice(
        &self,
        start: Option<NaiveDate>,
        end: Option<NaiveDate>,
    ) -> Result<PriceSeries, DomainError> {
        let bars = self
            .bars
            .iter()
            .filter(|b| start.is_none_or(|s| b.date >= s) && end.is_none_or(|e| b.date <= e))
            .copied()
            .collect();
        PriceSeries::new(bars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    OneStep,
    Classify,
    Car,
    RethinkOnly,
    RandomBaseline,
    BuyAndHold,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::OneStep => "one_step",
            StrategyKind::Classify => "classify",
            StrategyKind::Car => "car",
            StrategyKind::RethinkOnly => "rethink_only",
            StrategyKind::RandomBaseline => "random_baseline",
            StrategyKind::BuyAndHold => "buy_and_hold",
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            StrategyKind::OneStep => "One-Step",
            StrategyKind::Classify => "Classify",
            StrategyKind::Car => "Classify+Rethink (CAR)",
            StrategyKind::RethinkOnly => "Rethink-Only",
            StrategyKind::RandomBaseline => "Random",
            StrategyKind::BuyAndHold => "Buy-and-Hold",
        }
    }

    /// Whether this kind is produced by prompting a model.
    pub fn is_prompted(self) -> bool {
        matches!(
            self,
            StrategyKind::OneStep
                | StrategyKind::Classify
                | StrategyKind::Car
                | StrategyKind::RethinkOnly
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match norm.as_str() {
            "one_step" | "onestep" => StrategyKind::OneStep,
            "classify" => StrategyKind::Classify,
            "car" | "classify_rethink" => StrategyKind::Car,
            "rethink_only" | "rethink" => StrategyKind::RethinkOnly,
            "random_baseline" | "random" => StrategyKind::RandomBaseline,
            "buy_and_hold" | "buyandhold" | "bnh" => StrategyKind::BuyAndHold,
            _ => {
                return Err(DomainError::UnknownName {
                    what: "strategy",
                    value: s.to_string(),
                })
            }
        })
    }
}

/// Whether signals trade with or against the rolling score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Contrarian,
    Aligned,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Contrarian => "contrarian",
            Direction::Aligned => "aligned",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "contrarian" => Ok(Direction::Contrarian),
            "aligned" => Ok(Direction::Aligned),
            _ => Err(DomainError::UnknownName {
                what: "direction",
                value: s.to_string(),
            }),
        }
    }
}

/// Exchange-local session close.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cutoff {
    pub time: NaiveTime,
    pub offset: FixedOffset,
}

impl Cutoff {
    /// 15:30 Shanghai time.
    pub fn shanghai_close() -> Self {
        Self {
            time: NaiveTime::from_hms_opt(15, 30, 0).unwrap(),
            offset: FixedOffset::east_opt(8 * 3600).unwrap(),
        }
    }
}

impl Default for Cutoff {
    fn default() -> Self {
        Self::shanghai_close()
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.time.format("%H:%M:%S"), self.offset)
    }
}

impl FromStr for Cutoff {
    type Err = DomainError;

    /// Parses `HH:MM`, `HH:MM:SS`, optionally followed by a `+HH:MM` offset.
    /// Without an offset, Shanghai time is assumed.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::InvalidCutoff(s.to_string());
        let s = s.trim();
        let split = s.find(['+', '-']).unwrap_or(s.len());
        let (time_part, offset_part) = s.split_at(split);
        let time = NaiveTime::parse_from_str(time_part, "%H:%M:%S")
            .or_else(|_| NaiveTime::parse_from_str(time_part, "%H:%M"))
            .map_err(|_| bad())?;
        let offset = if offset_part.is_empty() {
            Cutoff::shanghai_close().offset
        } else {
            let sign = if offset_part.starts_with('-') { -1 } else { 1 };
            let (h, m) = offset_part[1..].split_once(':').ok_or_else(bad)?;
            let h: i32 = h.parse().map_err(|_| bad())?;
            let m: i32 = m.parse().map_err(|_| bad())?;
            FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)?
        };
        Ok(Cutoff { time, offset })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Number of most recent articles averaged.
    pub window: usize,
    pub threshold: f64,
    pub direction: Direction,
    pub fee_rate: f64,
    pub cutoff: Cutoff,
    pub initial_capital: f64,
    /// Seed for [`StrategyKind::RandomBaseline`].
    pub seed: u64,
    /// Number of random trades (Buy and Sell each count) for the random baseline.
    pub random_trades: usize,
}

impl StrategyConfig {
    /// Defaults per kind: 5-article contrarian for the single-pass prompts,
    /// 20-article aligned for CAR.
    pub fn for_kind(kind: StrategyKind) -> Self {
        let (window, direction) = match kind {
            StrategyKind::Car => (20, Direction::Aligned),
            _ => (5, Direction::Contrarian),
        };
        Self {
            kind,
            window,
            threshold: 0.0,
            direction,
            fee_rate: 0.0,
            cutoff: Cutoff::default(),
            initial_capital: 1.0,
            seed: 0,
            random_trades: 60,
        }
    }

    pub fn validate(self) -> Result<Self, DomainError> {
        validate_config(self)
    }
}

pub fn validate_config(config: StrategyConfig) -> Result<StrategyConfig, DomainError> {
    if config.window == 0 {
        return Err(DomainError::NonPositiveWindow);
    }
    if !(config.fee_rate.is_finite() && (0.0..1.0).contains(&config.fee_rate)) {
        return Err(DomainError::InvalidFeeRate(config.fee_rate));
    }
    if !(config.initial_capital.is_finite() && config.initial_capital > 0.0) {
        return Err(DomainError::NonPositiveCapital(config.initial_capital));
    }
    if !config.threshold.is_finite() {
        return Err(DomainError::NonFiniteThreshold(config.threshold));
    }
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub article_id: String,
    pub strategy: StrategyKind,
    pub category: Option<Category>,
    pub score: Score,
    pub explanation: String,
    pub attributed_date: NaiveDate,
    pub transcript_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Buy,
    Sell,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
            Action::Hold => "hold",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PositionState {
    Empty,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub date: NaiveDate,
    pub side: Side,
    pub price: f64,
    pub fee_paid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub strategy: StrategyKind,
    pub trades: Vec<Trade>,
    pub equity: Vec<EquityPoint>,
    pub total_return: f64,
    pub sharpe: Option<f64>,
    pub n_trades: usize,
}

impl BacktestResult {
    pub fn final_equity(&self) -> Option<f64> {
        self.equity.last().map(|p| p.value)
    }
}
