//! Score distribution statistics and report files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::backtest::{equity_csv, trades_csv};
use crate::domain::{BacktestResult, Score, StrategyConfig, StrategyKind};

/// Counts per grid value, index 0 is -1.0 and index 20 is +1.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Histogram {
    pub counts: [u64; 21],
}

impl Histogram {
    pub fn bin_centers() -> [f64; 21] {
        std::array::from_fn(|i| (i as i32 - 10) as f64 / 10.0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, score: Score) -> u64 {
        self.counts[(score.tenths() + 10) as usize]
    }

    /// `histogram.csv`: header `score,count`, 21 rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("score,count\n");
        for (s, c) in Score::grid().zip(self.counts) {
            let _ = writeln!(out, "{s},{c}");
        }
        out
    }
}

pub fn score_histogram(scores: &[Score]) -> Histogram {
    let mut h = Histogram::default();
    for s in scores {
        h.counts[(s.tenths() + 10) as usize] += 1;
    }
    h
}

/// Sample moments. Skewness and kurtosis are the standardized third and
/// fourth central moments (kurtosis minus 3); they are absent when the
/// data has no spread, and kurtosis also needs at least four values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

/// Single pass with running central moments.
pub fn distribution_stats(scores: &[Score]) -> DistributionStats {
    let (mut n, mut mean, mut m2, mut m3, mut m4) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for s in scores {
        let x = s.value();
        let n1 = n;
        n += 1.0;
        let delta = x - mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        mean += dn;
        m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
        m3 += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
        m2 += term1;
    }
    let count = scores.len();
    let spread = count >= 2 && m2 > 0.0;
    DistributionStats {
        n: count,
        mean: (count >= 1).then_some(mean),
        stddev: (count >= 2).then(|| (m2 / (n - 1.0)).sqrt()),
        skewness: spread.then(|| n.sqrt() * m3 / m2.powf(1.5)),
        excess_kurtosis: (spread && count >= 4).then(|| n * m4 / (m2 * m2) - 3.0),
    }
}

/// One strategy's configuration and backtest outcome.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub config: StrategyConfig,
    pub result: BacktestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub label: String,
    pub total_return: f64,
    pub sharpe: Option<f64>,
    pub n_trades: usize,
    pub window: Option<usize>,
    pub threshold: Option<f64>,
    pub direction: Option<String>,
    pub fee_rate: f64,
}

impl MetricsRow {
    pub fn from_run(run: &StrategyRun) -> Self {
        let kind = run.result.strategy;
        let windowed = !matches!(kind, StrategyKind::BuyAndHold | StrategyKind::RandomBaseline);
        Self {
            strategy: kind.as_str().to_string(),
            label: kind.display_name().to_string(),
            total_return: run.result.total_return,
            sharpe: run.result.sharpe,
            n_trades: run.result.n_trades,
            window: windowed.then_some(run.config.window),
            threshold: windowed.then_some(run.config.threshold),
            direction: windowed.then(|| run.config.direction.as_str().to_string()),
            fee_rate: run.config.fee_rate,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub strategies: Vec<MetricsRow>,
    pub score_distribution: DistributionStats,
}

/// Everything a report renders. `runs[0]` is the strategy under study,
/// the rest are baselines.
#[derive(Debug, Clone)]
pub struct Report {
    pub runs: Vec<StrategyRun>,
    pub histogram: Histogram,
    pub stats: DistributionStats,
}

impl Report {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            strategies: self.runs.iter().map(MetricsRow::from_run).collect(),
            score_distribution: self.stats,
        }
    }
}

/// Return / Sharpe table with one row per strategy.
pub fn table_markdown(rows: &[MetricsRow]) -> String {
    let mut out = String::from("| Strategy | Return | Sharpe Ratio |\n|---|---:|---:|\n");
    for r in rows {
        let sharpe = r.sharpe.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}"));
        let _ = writeln!(out, "| {} | {:.2}% | {} |", r.label, r.total_return * 100.0, sharpe);
    }
    out
}

/// Writes `metrics.json`, `equity.csv`, `trades.csv`, `histogram.csv` and
/// `report.svg` for the primary run, plus `equity_<kind>.csv` and
/// `trades_<kind>.csv` per baseline. Output depends only on `report`.
pub fn emit_report(report: &Report, out_dir: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut write = |name: String, contents: String| -> io::Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, contents)?;
        written.push(path);
        Ok(())
    };

    let mut metrics = serde_json::to_string_pretty(&report.metrics())?;
    metrics.push('\n');
    write("metrics.json".into(), metrics)?;
    if let Some(primary) = report.runs.first() {
        write("equity.csv".into(), equity_csv(&primary.result.equity))?;
        write("trades.csv".into(), trades_csv(&primary.result.trades))?;
    }
    for run in report.runs.iter().skip(1) {
        let kind = run.result.strategy.as_str();
        write(format!("equity_{kind}.csv"), equity_csv(&run.result.equity))?;
        write(format!("trades_{kind}.csv"), trades_csv(&run.result.trades))?;
    }
    write("histogram.csv".into(), report.histogram.to_csv())?;
    write("report.svg".into(), render_svg(report))?;
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Static two-panel chart: equity curves on top, score histogram below.
pub fn render_svg(report: &Report) -> String {
    let (w, h) = (800.0, 640.0);
    let (left, right) = (60.0, 780.0);
    let (eq_top, eq_bottom) = (40.0, 300.0);
    let (hist_top, hist_bottom) = (370.0, 600.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="24" font-size="14">Equity</text>"#);

    let values: Vec<f64> = report.runs.iter().flat_map(|r| r.result.equity.iter().map(|p| p.value)).collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let _ = writeln!(
        svg,
        r##"<line x1="{left}" y1="{eq_bottom}" x2="{right}" y2="{eq_bottom}" stroke="#888"/>"##
    );
    if lo.is_finite() {
        let _ = writeln!(svg, r#"<text x="4" y="{eq_bottom:.2}">{lo:.3}</text>"#);
        let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{hi:.3}</text>"#, eq_top + 10.0);
    }
    for (i, run) in report.runs.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts = &run.result.equity;
        let steps = (pts.len().max(2) - 1) as f64;
        let coords: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let x = left + (right - left) * j as f64 / steps;
                let y = eq_bottom - (eq_bottom - eq_top) * (p.value - lo) / span;
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = eq_top + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{colour}">{}</text>"#,
            right - 180.0,
            run.result.strategy.display_name()
        );
    }

    let _ = writeln!(svg, r#"<text x="{left}" y="{:.2}" font-size="14">Score distribution</text>"#, hist_top - 16.0);
    let max_count = report.histogram.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bin_w = (right - left) / 21.0;
    for (i, (&count, centre)) in report.histogram.counts.iter().zip(Histogram::bin_centers()).enumerate() {
        let bh = (hist_bottom - hist_top) * count as f64 / max_count;
        let x = left + bin_w * i as f64;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="#4c72b0"><title>{centre:.1}: {count}</title></rect>"##,
            x + 1.0,
            hist_bottom - bh,
            bin_w - 2.0
        );
        if i % 5 == 0 {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{centre:.1}</text>"#,
                x + bin_w / 2.0,
                hist_bottom + 16.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
