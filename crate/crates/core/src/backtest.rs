//! Long-only, all-in/all-out execution at the daily close.

use std::collections::HashMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::domain::{
    validate_config, Action, BacktestResult, DomainError, EquityPoint, PositionState, PriceSeries, Side,
    StrategyConfig, StrategyKind, Trade,
};
use crate::signal::DatedAction;

pub const TRADING_DAYS_PER_YEAR: u32 = 252;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("action on {0} which is not a trading day in the price series")]
    OffCalendar(NaiveDate),
    #[error("sell on {0} while the position is empty")]
    SellWhileEmpty(NaiveDate),
    #[error("buy on {0} while the position is already full")]
    BuyWhileFull(NaiveDate),
    #[error("actions are not sorted: {prev} then {next}")]
    Unsorted { prev: NaiveDate, next: NaiveDate },
    #[error("need at least 2 returns, got {0}")]
    InsufficientData(usize),
    #[error(transparent)]
    Config(#[from] DomainError),
}

/// Annualized Sharpe ratio of periodic returns, using the sample standard
/// deviation. `None` when all excess returns are identical.
pub fn sharpe_ratio(
    returns: &[f64],
    periods_per_year: u32,
    risk_free: f64,
) -> Result<Option<f64>, BacktestError> {
    if returns.len() < 2 {
        return Err(BacktestError::InsufficientData(returns.len()));
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    if excess.iter().all(|x| *x == excess[0]) {
        return Ok(None);
    }
    let n = excess.len() as f64;
    let mean = excess.iter().sum::<f64>() / n;
    let var = excess.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Ok(None);
    }
    Ok(Some(mean / sd * (periods_per_year as f64).sqrt()))
}

/// Simple returns between consecutive equity points.
pub fn daily_returns(equity: &[EquityPoint]) -> Vec<f64> {
    equity.windows(2).map(|w| w[1].value / w[0].value - 1.0).collect()
}

/// Replays `actions` over `prices`, marking equity at every close.
///
/// Buys spend all cash (less `fee_rate × cash`) at the day's close; sells
/// liquidate all units (less `fee_rate × proceeds`). Hold actions are
/// ignored. The Sharpe ratio uses daily equity returns, rf = 0, √252.
pub fn run_backtest(
    prices: &PriceSeries,
    actions: &[DatedAction],
    config: &StrategyConfig,
) -> Result<BacktestResult, BacktestError> {
    let config = validate_config(config.clone())?;
    let mut by_date: HashMap<NaiveDate, Action> = HashMap::new();
    let mut prev: Option<NaiveDate> = None;
    for a in actions {
        if let Some(p) = prev {
            if a.date <= p {
                return Err(BacktestError::Unsorted { prev: p, next: a.date });
            }
        }
        prev = Some(a.date);
        if prices.close_on(a.date).is_none() {
            return Err(BacktestError::OffCalendar(a.date));
        }
        if a.action != Action::Hold {
            by_date.insert(a.date, a.action);
        }
    }

    let fee_rate = config.fee_rate;
    let mut position = PositionState::Empty;
    let mut cash = config.initial_capital;
    let mut units = 0.0;
    let mut trades = Vec::new();
    let mut equity = Vec::with_capacity(prices.len());

    for bar in prices.bars() {
        match by_date.get(&bar.date) {
            Some(Action::Buy) => {
                if position == PositionState::Full {
                    return Err(BacktestError::BuyWhileFull(bar.date));
                }
                let fee = fee_rate * cash;
                units = (cash - fee) / bar.close;
                cash = 0.0;
                position = PositionState::Full;
                trades.push(Trade { date: bar.date, side: Side::Buy, price: bar.close, fee_paid: fee });
            }
            Some(Action::Sell) => {
                if position == PositionState::Empty {
                    return Err(BacktestError::SellWhileEmpty(bar.date));
                }
                let proceeds = units * bar.close;
                let fee = fee_rate * proceeds;
                cash = proceeds - fee;
                units = 0.0;
                position = PositionState::Empty;
                trades.push(Trade { date: bar.date, side: Side::Sell, price: bar.close, fee_paid: fee });
            }
            _ => {}
        }
        let value = match position {
            PositionState::Empty => cash,
            PositionState::Full => units * bar.close,
        };
        equity.push(EquityPoint { date: bar.date, value });
    }

    let final_value = equity.last().map_or(config.initial_capital, |p| p.value);
    let returns = daily_returns(&equity);
    let sharpe = if returns.len() >= 2 {
        sharpe_ratio(&returns, TRADING_DAYS_PER_YEAR, 0.0)?
    } else {
        None
    };
    Ok(BacktestResult {
        strategy: config.kind,
        n_trades: trades.len(),
        trades,
        equity,
        total_return: final_value / config.initial_capital - 1.0,
        sharpe,
    })
}

/// Buys at the first close and holds to the end.
pub fn buy_and_hold(prices: &PriceSeries, config: &StrategyConfig) -> Result<BacktestResult, BacktestError> {
    let config = StrategyConfig { kind: StrategyKind::BuyAndHold, ..config.clone() };
    let open = DatedAction { date: prices.first().date, action: Action::Buy, trigger_avg: None };
    run_backtest(prices, &[open], &config)
}

/// `equity.csv`: header `date,value`.
pub fn equity_csv(equity: &[EquityPoint]) -> String {
    let mut out = String::from("date,value\n");
    for p in equity {
        out.push_str(&format!("{},{}\n", p.date, p.value));
    }
    out
}

/// `trades.csv`: header `date,side,price,fee_paid`.
pub fn trades_csv(trades: &[Trade]) -> String {
    let mut out = String::from("date,side,price,fee_paid\n");
    for t in trades {
        out.push_str(&format!("{},{},{},{}\n", t.date, t.side.as_str(), t.price, t.fee_paid));
    }
    out
}
