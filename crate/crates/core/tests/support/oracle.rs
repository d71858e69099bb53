//! Brute-force reference simulator for the windowed strategies.
//!
//! Deliberately naive: every trading day it rebuilds the list of scores
//! seen so far, recomputes the mean of the last `window` from scratch, and
//! applies the buy/sell rule as plain if/else. It shares no code with the
//! library.

#![allow(dead_code)]

use chrono::NaiveDate;

#[derive(Debug, Clone)]
pub struct OracleCase {
    /// (date, close) in ascending date order.
    pub closes: Vec<(NaiveDate, f64)>,
    /// (attributed date, score in tenths) in stream order.
    pub scores: Vec<(NaiveDate, i32)>,
    pub window: usize,
    pub threshold: f64,
    pub contrarian: bool,
    pub fee_rate: f64,
    pub capital: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrade {
    pub date: NaiveDate,
    pub buy: bool,
    pub price: f64,
    pub fee: f64,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub trades: Vec<OracleTrade>,
    pub equity: Vec<f64>,
}

impl OracleOutcome {
    pub fn final_equity(&self) -> f64 {
        *self.equity.last().unwrap()
    }
}

pub fn simulate(case: &OracleCase) -> OracleOutcome {
    let mut holding = false;
    let mut cash = case.capital;
    let mut units = 0.0;
    let mut trades = Vec::new();
    let mut equity = Vec::new();

    for &(today, close) in &case.closes {
        let mut seen: Vec<i32> = Vec::new();
        for &(d, t) in &case.scores {
            if d <= today {
                seen.push(t);
            }
        }
        if seen.len() >= case.window {
            let mut sum = 0i64;
            for t in &seen[seen.len() - case.window..] {
                sum += *t as i64;
            }
            let avg = sum as f64 / (10.0 * case.window as f64);

            let want_buy;
            let want_sell;
            if case.contrarian {
                want_buy = avg < case.threshold;
                want_sell = avg > case.threshold;
            } else {
                want_buy = avg > case.threshold;
                want_sell = avg < case.threshold;
            }

            if !holding && want_buy {
                let fee = case.fee_rate * cash;
                units = (cash - fee) / close;
                cash = 0.0;
                holding = true;
                trades.push(OracleTrade { date: today, buy: true, price: close, fee });
            } else if holding && want_sell {
                let proceeds = units * close;
                let fee = case.fee_rate * proceeds;
                cash = proceeds - fee;
                units = 0.0;
                holding = false;
                trades.push(OracleTrade { date: today, buy: false, price: close, fee });
            }
        }
        equity.push(if holding { units * close } else { cash });
    }
    OracleOutcome { trades, equity }
}
