//! Rolling-score trading signals.
//!
//! The window counts articles, not days. Each trading day with news is
//! evaluated once, after its last article, against the position held at
//! the start of that day, so the position flips at most once per day.

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{
    validate_config, Action, Direction, DomainError, PositionState, Score, ScoreRecord, StrategyConfig,
    StrategyKind,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("need {need} scores, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("score stream is not sorted by date: {prev} before {next}")]
    Unsorted { prev: NaiveDate, next: NaiveDate },
    #[error(transparent)]
    Config(#[from] DomainError),
}

/// Scores in evaluation order, dates non-decreasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreStream {
    entries: Vec<(NaiveDate, Score)>,
}

impl ScoreStream {
    pub fn new(entries: Vec<(NaiveDate, Score)>) -> Result<Self, SignalError> {
        for w in entries.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(SignalError::Unsorted { prev: w[0].0, next: w[1].0 });
            }
        }
        Ok(Self { entries })
    }

    /// Stable-sorts by attributed date, so records already ordered by
    /// (timestamp, id) within a day keep that order.
    pub fn from_records(records: &[ScoreRecord]) -> Self {
        let mut entries: Vec<_> = records.iter().map(|r| (r.attributed_date, r.score)).collect();
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(NaiveDate, Score)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> Vec<Score> {
        self.entries.iter().map(|e| e.1).collect()
    }

    /// Distinct dates in order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out: Vec<NaiveDate> = Vec::new();
        for (d, _) in &self.entries {
            if out.last() != Some(d) {
                out.push(*d);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatedAction {
    pub date: NaiveDate,
    pub action: Action,
    /// Rolling mean that produced the action; `None` for random trades.
    pub trigger_avg: Option<f64>,
}

fn mean_of_tenths(sum: i64, window: usize) -> f64 {
    sum as f64 / (10.0 * window as f64)
}

/// Mean of the last `window` scores.
///
/// Summed exactly in tenths and divided once, so equal windows always
/// give bit-identical means.
pub fn rolling_mean(scores: &[Score], window: usize) -> Result<f64, SignalError> {
    if window == 0 {
        return Err(DomainError::NonPositiveWindow.into());
    }
    if scores.len() < window {
        return Err(SignalError::InsufficientHistory { have: scores.len(), need: window });
    }
    let sum: i64 = scores[scores.len() - window..].iter().map(|s| s.tenths() as i64).sum();
    Ok(mean_of_tenths(sum, window))
}

/// Strict comparisons: a mean equal to the threshold never trades.
pub fn decide(avg: f64, threshold: f64, position: PositionState, direction: Direction) -> Action {
    let (buy_side, sell_side) = match direction {
        Direction::Contrarian => (avg < threshold, avg > threshold),
        Direction::Aligned => (avg > threshold, avg < threshold),
    };
    match position {
        PositionState::Empty if buy_side => Action::Buy,
        PositionState::Full if sell_side => Action::Sell,
        _ => Action::Hold,
    }
}

/// Incremental form of the windowed rule. Feed scores in stream order;
/// each day's action is released once a later date (or `finish`) arrives.
#[derive(Debug, Clone)]
pub struct SignalGenerator {
    window: usize,
    threshold: f64,
    direction: Direction,
    tenths: Vec<i32>,
    sum: i64,
    position: PositionState,
    current: Option<NaiveDate>,
}

impl SignalGenerator {
    pub fn new(config: &StrategyConfig) -> Result<Self, SignalError> {
        let config = validate_config(config.clone())?;
        Ok(Self {
            window: config.window,
            threshold: config.threshold,
            direction: config.direction,
            tenths: Vec::new(),
            sum: 0,
            position: PositionState::Empty,
            current: None,
        })
    }

    pub fn position(&self) -> PositionState {
        self.position
    }

    pub fn push(&mut self, date: NaiveDate, score: Score) -> Result<Option<DatedAction>, SignalError> {
        let mut released = None;
        match self.current {
            Some(cur) if date < cur => return Err(SignalError::Unsorted { prev: cur, next: date }),
            Some(cur) if date > cur => released = self.close_day(cur),
            _ => {}
        }
        self.current = Some(date);
        self.tenths.push(score.tenths());
        self.sum += score.tenths() as i64;
        if self.tenths.len() > self.window {
            self.sum -= self.tenths[self.tenths.len() - 1 - self.window] as i64;
        }
        Ok(released)
    }

    pub fn finish(&mut self) -> Option<DatedAction> {
        let day = self.current.take()?;
        self.close_day(day)
    }

    fn close_day(&mut self, date: NaiveDate) -> Option<DatedAction> {
        if self.tenths.len() < self.window {
            return None;
        }
        let avg = mean_of_tenths(self.sum, self.window);
        let action = decide(avg, self.threshold, self.position, self.direction);
        match action {
            Action::Buy => self.position = PositionState::Full,
            Action::Sell => self.position = PositionState::Empty,
            Action::Hold => {}
        }
        Some(DatedAction { date, action, trigger_avg: Some(avg) })
    }
}

/// One action per day with news once the window has filled.
///
/// `RandomBaseline` instead picks `config.random_trades` distinct news days
/// with a seeded RNG and alternates Buy/Sell on them. `BuyAndHold` yields
/// no signals; see [`crate::backtest::buy_and_hold`].
pub fn generate_signals(
    stream: &ScoreStream,
    config: &StrategyConfig,
) -> Result<Vec<DatedAction>, SignalError> {
    match config.kind {
        StrategyKind::RandomBaseline => random_signals(stream, config),
        StrategyKind::BuyAndHold => {
            validate_config(config.clone())?;
            Ok(Vec::new())
        }
        _ => {
            let mut generator = SignalGenerator::new(config)?;
            let mut out = Vec::new();
            for &(date, score) in stream.entries() {
                out.extend(generator.push(date, score)?);
            }
            out.extend(generator.finish());
            Ok(out)
        }
    }
}

fn random_signals(stream: &ScoreStream, config: &StrategyConfig) -> Result<Vec<DatedAction>, SignalError> {
    let config = validate_config(config.clone())?;
    let days = stream.dates();
    let k = config.random_trades.min(days.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = sample(&mut rng, days.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .enumerate()
        .map(|(i, idx)| DatedAction {
            date: days[idx],
            action: if i % 2 == 0 { Action::Buy } else { Action::Sell },
            trigger_avg: None,
        })
        .collect())
}

/// `signals.csv`: header `date,action,trigger_avg`.
pub fn signals_csv(actions: &[DatedAction]) -> String {
    let mut out = String::from("date,action,trigger_avg\n");
    for a in actions {
        let avg = a.trigger_avg.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", a.date, a.action, avg));
    }
    out
}
