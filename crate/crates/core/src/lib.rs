//! Multi-step LLM news scoring for gold, rolling-score trading signals, and
//! a daily-close backtester.
//!
//! The pipeline is: [`ingest`] loads prices and news and maps each article
//! to a trading day, [`prompt`] scores articles through a chat-completion
//! backend, [`signal`] turns rolling score means into Buy/Sell actions,
//! [`backtest`] executes them, and [`analytics`] summarizes the results.

pub mod analytics;
pub mod backtest;
pub mod domain;
pub mod ingest;
pub mod prompt;
pub mod signal;

pub use domain::*;
