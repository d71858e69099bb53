use car_bench::{price_path, score_stream};
use car_core::analytics::{distribution_stats, score_histogram};
use car_core::backtest::run_backtest;
use car_core::prompt::parse_score;
use car_core::signal::{generate_signals, ScoreStream};
use car_core::{StrategyConfig, StrategyKind};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn signals_and_backtest(c: &mut Criterion) {
    // roughly the length of a five-year daily window
    let prices = price_path(1400);
    let stream = ScoreStream::new(score_stream(&prices, 4)).unwrap();
    let config = StrategyConfig::for_kind(StrategyKind::Car);

    c.bench_function("generate_signals/1400d x4", |b| {
        b.iter(|| generate_signals(black_box(&stream), &config).unwrap())
    });
    let actions = generate_signals(&stream, &config).unwrap();
    c.bench_function("run_backtest/1400d", |b| {
        b.iter(|| run_backtest(black_box(&prices), black_box(&actions), &config).unwrap())
    });
}

fn parsing(c: &mut Criterion) {
    let text = "Looking at it from a reverse thinking perspective, the long-term trend in gold prices \
                is influenced by various factors. I would adjust the score to 0.7. As a result, the final \
                score is [0.7].";
    c.bench_function("parse_score/rethink reply", |b| b.iter(|| parse_score(black_box(text)).unwrap()));
}

fn analytics(c: &mut Criterion) {
    let prices = price_path(1400);
    let scores: Vec<_> = score_stream(&prices, 4).into_iter().map(|(_, s)| s).collect();
    c.bench_function("score_histogram/5600", |b| b.iter(|| score_histogram(black_box(&scores))));
    c.bench_function("distribution_stats/5600", |b| b.iter(|| distribution_stats(black_box(&scores))));
}

criterion_group!(benches, signals_and_backtest, parsing, analytics);
criterion_main!(benches);
