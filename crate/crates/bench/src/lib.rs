//! Synthetic inputs for the benchmarks.

use car_core::{PriceBar, PriceSeries, Score};
use chrono::{Duration, NaiveDate};

/// Deterministic price path with `days` bars.
pub fn price_path(days: usize) -> PriceSeries {
    let start = NaiveDate::from_ymd_opt(2018, 1, 2).unwrap();
    let mut close = 270.0;
    let bars = (0..days)
        .map(|i| {
            // small periodic drift keeps closes positive and varied
            close *= 1.0 + 0.004 * ((i as f64 * 0.37).sin() + 0.1);
            PriceBar::new(start + Duration::days(i as i64), close).unwrap()
        })
        .collect();
    PriceSeries::new(bars).unwrap()
}

/// `per_day` scores on every bar date, cycling through the grid.
pub fn score_stream(prices: &PriceSeries, per_day: usize) -> Vec<(NaiveDate, Score)> {
    let mut t = 0i32;
    let mut out = Vec::with_capacity(prices.len() * per_day);
    for bar in prices.bars() {
        for _ in 0..per_day {
            t = (t * 7 + 3) % 21;
            out.push((bar.date, Score::from_tenths(t - 10).unwrap()));
        }
    }
    out
}
