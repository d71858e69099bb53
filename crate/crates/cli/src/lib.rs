//! `car` command implementations: `score`, `backtest` and `sweep`.
//!
//! Scoring writes `scores.jsonl`; the other two commands only read it, so
//! backtests and parameter sweeps never touch the completion backend.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use car_core::analytics::{
    distribution_stats, emit_report, score_histogram, table_markdown, MetricsRow, Report, StrategyRun,
};
use car_core::backtest::{buy_and_hold, run_backtest};
use car_core::ingest::{load_news, load_price_series, TradingCalendar};
use car_core::prompt::{
    CompletionBackend, CompletionParams, Language, PromptBuilder, Scorer, StubBackend, TemplateSet,
    TranscriptCache,
};
use car_core::signal::{generate_signals, signals_csv, ScoreStream};
use car_core::{Cutoff, Direction, PriceSeries, ScoreRecord, StrategyConfig, StrategyKind};
use chrono::{Duration, NaiveDate};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no scores fall inside the price range {start}..={end}")]
    EmptyOverlap { start: NaiveDate, end: NaiveDate },
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("scores were produced by {found}, not {wanted}; pass the matching --strategy")]
    StrategyMismatch { wanted: &'static str, found: &'static str },
    #[error("{failed} of {total} articles could not be scored")]
    Unscored { failed: usize, total: usize },
    #[error("{path}:{line}: {message}")]
    BadScoreLine { path: String, line: usize, message: String },
}

#[derive(Debug, Parser)]
#[command(name = "car", version, about = "Score gold news with an LLM and backtest the resulting signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every article in a news file and write scores.jsonl.
    Score(ScoreArgs),
    /// Backtest one strategy against buy-and-hold and write a report.
    Backtest(BacktestArgs),
    /// Backtest a window × threshold grid and write sweep.csv.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub news: PathBuf,
    #[arg(long, default_value = "car")]
    pub strategy: StrategyKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Offline rule file; no network configuration is needed with it.
    #[arg(long)]
    pub stub: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    #[arg(long, env = "CAR_CACHE_DIR", default_value = ".car-cache")]
    pub cache: PathBuf,
    /// Trading calendar for session attribution. Weekdays are assumed
    /// without it.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    pub lang: Language,
    /// Directory with one_step.txt, classify.txt and rethink.txt.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value_t = Cutoff::default())]
    pub cutoff: Cutoff,
    #[arg(long, env = "CAR_MODEL")]
    pub model: Option<String>,
}

/// Strategy knobs shared by `backtest` and `sweep`.
#[derive(Debug, Args, Clone)]
pub struct StrategyArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value = "car")]
    pub strategy: StrategyKind,
    #[arg(long)]
    pub direction: Option<Direction>,
    #[arg(long)]
    pub fee: Option<f64>,
    #[arg(long)]
    pub capital: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub random_trades: Option<usize>,
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: StrategyArgs,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: StrategyArgs,
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub thresholds: Vec<f64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(args) => cmd_score(&args),
        Command::Backtest(args) => cmd_backtest(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

fn backend(args: &ScoreArgs) -> Result<Arc<dyn CompletionBackend>> {
    if let Some(path) = &args.stub {
        return Ok(Arc::new(StubBackend::from_file(path)?));
    }
    http_backend()
}

#[cfg(feature = "http")]
fn http_backend() -> Result<Arc<dyn CompletionBackend>> {
    Ok(Arc::new(car_core::prompt::HttpBackend::from_env()?))
}

#[cfg(not(feature = "http"))]
fn http_backend() -> Result<Arc<dyn CompletionBackend>> {
    bail!("built without the `http` feature; pass --stub")
}

/// Weekdays spanning the news, padded so late articles still land.
fn fallback_calendar(dates: impl Iterator<Item = NaiveDate> + Clone) -> Result<TradingCalendar> {
    let (Some(lo), Some(hi)) = (dates.clone().min(), dates.max()) else {
        bail!("news file is empty");
    };
    Ok(TradingCalendar::weekdays(lo, hi + Duration::days(14))?)
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    if !args.strategy.is_prompted() {
        bail!("{} does not score news", args.strategy.as_str());
    }
    let articles = load_news(&args.news)?;
    let calendar = match &args.prices {
        Some(p) => TradingCalendar::from_series(&load_price_series(p)?),
        None => fallback_calendar(
            articles.iter().map(|a| a.timestamp.with_timezone(&args.cutoff.offset).date_naive()),
        )?,
    };
    let templates = match &args.templates {
        Some(dir) => TemplateSet::from_dir(dir, args.lang)?,
        None => TemplateSet::builtin(args.lang),
    };
    let mut params = CompletionParams::default();
    if let Some(model) = &args.model {
        params.model = model.clone();
    }
    let backend = backend(args)?;
    let scorer = Scorer::new(PromptBuilder::new(templates), backend.clone())
        .with_params(params)
        .with_cache(TranscriptCache::new(&args.cache));
    let config = StrategyConfig { cutoff: args.cutoff, ..StrategyConfig::for_kind(args.strategy) };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let results: Vec<_> = pool.install(|| {
        articles.par_iter().map(|a| scorer.score_article(a, &config, &calendar)).collect()
    });

    // articles are already in (timestamp, id) order; the stable sort keeps it
    let mut records = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failed += 1;
                eprintln!("error: {e}");
            }
        }
    }
    records.sort_by_key(|r| r.attributed_date);
    write_scores(&args.out, &records)?;
    eprintln!("scored {} articles; backend calls: {}", records.len(), backend.calls());
    if failed > 0 {
        return Err(CliError::Unscored { failed, total: articles.len() }.into());
    }
    Ok(())
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn load_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| CliError::BadScoreLine {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Prices and the score stream restricted to the requested dates.
pub struct Inputs {
    pub prices: PriceSeries,
    pub stream: ScoreStream,
}

/// Scores attributed to a holiday inside the price series (scored against
/// the weekday calendar) move to the next close, which is where the price
/// calendar would have put them. Scores outside the series are dropped.
pub fn prepare(args: &StrategyArgs) -> Result<Inputs> {
    let full = load_price_series(&args.prices)?;
    let prices = full.slice(args.start, args.end)?;
    let records = load_scores(&args.scores)?;
    if args.strategy.is_prompted() {
        if let Some(other) = records.iter().find(|r| r.strategy != args.strategy) {
            return Err(CliError::StrategyMismatch {
                wanted: args.strategy.as_str(),
                found: other.strategy.as_str(),
            }
            .into());
        }
    }
    let calendar = TradingCalendar::from_series(&full);
    let (first, last) = (prices.first().date, prices.last().date);
    let mut entries: Vec<_> = records
        .iter()
        .filter(|r| r.attributed_date >= calendar.first())
        .filter_map(|r| calendar.next_on_or_after(r.attributed_date).map(|d| (d, r.score)))
        .filter(|(d, _)| (first..=last).contains(d))
        .collect();
    entries.sort_by_key(|e| e.0);
    if entries.is_empty() {
        return Err(CliError::EmptyOverlap { start: first, end: last }.into());
    }
    Ok(Inputs { prices, stream: ScoreStream::new(entries)? })
}

pub fn strategy_config(
    args: &StrategyArgs,
    window: Option<usize>,
    threshold: Option<f64>,
) -> Result<StrategyConfig> {
    let mut c = StrategyConfig::for_kind(args.strategy);
    if let Some(w) = window {
        c.window = w;
    }
    if let Some(t) = threshold {
        c.threshold = t;
    }
    if let Some(d) = args.direction {
        c.direction = d;
    }
    if let Some(f) = args.fee {
        c.fee_rate = f;
    }
    if let Some(k) = args.capital {
        c.initial_capital = k;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(n) = args.random_trades {
        c.random_trades = n;
    }
    Ok(c.validate()?)
}

/// Signals and backtest for one configuration.
pub fn evaluate(inputs: &Inputs, config: &StrategyConfig) -> Result<(StrategyRun, Vec<car_core::signal::DatedAction>)> {
    let (result, actions) = if config.kind == StrategyKind::BuyAndHold {
        (buy_and_hold(&inputs.prices, config)?, Vec::new())
    } else {
        let actions = generate_signals(&inputs.stream, config)?;
        (run_backtest(&inputs.prices, &actions, config)?, actions)
    };
    Ok((StrategyRun { config: config.clone(), result }, actions))
}

pub fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    let inputs = prepare(&args.common)?;
    let config = strategy_config(&args.common, args.window, args.threshold)?;
    let (primary, actions) = evaluate(&inputs, &config)?;
    let mut runs = vec![primary];
    if config.kind != StrategyKind::BuyAndHold {
        let bnh = StrategyConfig { kind: StrategyKind::BuyAndHold, ..config.clone() };
        runs.push(evaluate(&inputs, &bnh)?.0);
    }
    let scores = inputs.stream.scores();
    let report = Report { runs, histogram: score_histogram(&scores), stats: distribution_stats(&scores) };
    let out = &args.common.out;
    emit_report(&report, out).with_context(|| format!("writing report to {}", out.display()))?;
    fs::write(out.join("signals.csv"), signals_csv(&actions))?;
    print!("{}", table_markdown(&report.metrics().strategies));
    Ok(())
}

pub fn sweep_csv(rows: &[(usize, f64, MetricsRow)]) -> String {
    let mut out = String::from("window,threshold,direction,total_return,sharpe,n_trades\n");
    for (w, t, r) in rows {
        let sharpe = r.sharpe.map(|s| s.to_string()).unwrap_or_default();
        let dir = r.direction.as_deref().unwrap_or("");
        let _ = writeln!(out, "{w},{t},{dir},{},{sharpe},{}", r.total_return, r.n_trades);
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.windows.is_empty() || args.thresholds.is_empty() {
        return Err(CliError::EmptyGrid.into());
    }
    let inputs = prepare(&args.common)?;
    let mut rows = Vec::new();
    for &w in &args.windows {
        for &t in &args.thresholds {
            let config = strategy_config(&args.common, Some(w), Some(t))
                .with_context(|| format!("grid cell window={w} threshold={t}"))?;
            let (run, _) = evaluate(&inputs, &config)?;
            rows.push((w, t, MetricsRow::from_run(&run)));
        }
    }
    fs::create_dir_all(&args.common.out)?;
    fs::write(args.common.out.join("sweep.csv"), sweep_csv(&rows))?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
