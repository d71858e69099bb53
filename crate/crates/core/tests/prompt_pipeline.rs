use std::sync::Arc;

use car_core::ingest::TradingCalendar;
use car_core::prompt::{
    parse_category, parse_score, CompletionBackend, ParseError, PromptBuilder, RetryPolicy, ScoreErrorKind, Scorer, StubBackend,
    TemplateSet, TranscriptCache,
};
use car_core::{Category, NewsArticle, Score, StrategyConfig, StrategyKind};
use chrono::{DateTime, NaiveDate};

const ONE_STEP: &str = include_str!("fixtures/golden_one_step.txt");
const CLASSIFY: &str = include_str!("fixtures/golden_classify.txt");
const RETHINK: &str = include_str!("fixtures/golden_rethink.txt");
const ARTICLE: &str = include_str!("fixtures/sample_article.txt");

fn case_article() -> NewsArticle {
    // a Monday morning, before the cutoff
    let ts = DateTime::parse_from_rfc3339("2018-02-05T09:30:00+08:00").unwrap();
    NewsArticle::new("gold-0205", ts, ARTICLE.trim(), Some("wire".into())).unwrap()
}

fn calendar() -> TradingCalendar {
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    TradingCalendar::weekdays(start, NaiveDate::from_ymd_opt(2018, 12, 31).unwrap()).unwrap()
}

/// Step-1 rules differ by prompt: the classify template asks to "categorize".
fn golden_rules() -> String {
    let esc = |s: &str| s.trim().replace('\n', "\\n");
    format!(
        "1 | russian gate & categorize | {}\n1 | russian gate | {}\n2 | russian gate | {}\n",
        esc(CLASSIFY),
        esc(ONE_STEP),
        esc(RETHINK)
    )
}

fn scorer(rules: &str) -> (Scorer, Arc<StubBackend>) {
    let stub = Arc::new(StubBackend::parse_rules(rules).unwrap());
    let s = Scorer::new(PromptBuilder::new(TemplateSet::english()), stub.clone())
        .with_retry(RetryPolicy::no_delay(5));
    (s, stub)
}

#[test]
fn golden_replies_parse_to_expected_scores() {
    assert_eq!(parse_score(ONE_STEP), Ok(Score::new(-0.8).unwrap()));
    assert_eq!(parse_score(CLASSIFY), Ok(Score::new(0.5).unwrap()));
    assert_eq!(parse_score(RETHINK), Ok(Score::new(0.7).unwrap()));
    assert_eq!(parse_category(CLASSIFY), Ok(Category::GoldSupplyDemand));
}

#[test]
fn golden_one_step_body_alone_has_no_verdict() {
    let body = ONE_STEP.lines().next().unwrap();
    assert_eq!(parse_score(body), Err(ParseError::NoScoreFound));
}

#[test]
fn sample_article_through_each_strategy() {
    let cal = calendar();
    let (s, stub) = scorer(&golden_rules());

    let rec = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::OneStep), &cal)
        .unwrap();
    assert_eq!(rec.score, Score::new(-0.8).unwrap());
    assert_eq!(rec.category, None);
    assert_eq!(rec.attributed_date, NaiveDate::from_ymd_opt(2018, 2, 5).unwrap());
    assert_eq!(stub.calls(), 1);

    let rec = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::Classify), &cal)
        .unwrap();
    assert_eq!((rec.category, rec.score), (Some(Category::GoldSupplyDemand), Score::new(0.5).unwrap()));
    assert_eq!(stub.calls(), 2);

    let rec = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::Car), &cal)
        .unwrap();
    assert_eq!(rec.category, Some(Category::GoldSupplyDemand));
    assert_eq!(rec.score, Score::new(0.7).unwrap());
    assert_eq!(rec.strategy, StrategyKind::Car);
    assert!(rec.explanation.contains("rated as [0.5]"));
    assert!(rec.explanation.contains("final score is [0.7]"));
    assert_eq!(rec.transcript_hash.len(), 64);
    assert_eq!(stub.calls(), 4, "CAR needs two calls on a cold cache");

    let rec = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::RethinkOnly), &cal)
        .unwrap();
    assert_eq!((rec.category, rec.score), (None, Score::new(0.7).unwrap()));
}

#[test]
fn identity_rethink_keeps_first_score() {
    let rules = "1 | * | Category: central bank policy. Hawkish tone. [-0.3]\n2 | * | No change. [{prev_score}]\n";
    let (s, _) = scorer(rules);
    let rec = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::Car), &calendar())
        .unwrap();
    assert_eq!(rec.score, Score::new(-0.3).unwrap());
    assert_eq!(rec.category, Some(Category::CentralBankPolicy));
}

#[test]
fn warm_cache_replays_identically_without_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cal = calendar();
    let config = StrategyConfig::for_kind(StrategyKind::Car);

    let (cold, cold_stub) = scorer(&golden_rules());
    let cold = cold.with_cache(TranscriptCache::new(dir.path()));
    let first = cold.score_article(&case_article(), &config, &cal).unwrap();
    assert_eq!(cold_stub.calls(), 2);

    // a backend with no rules would fail on any request
    let (warm, warm_stub) = scorer("");
    let warm = warm.with_cache(TranscriptCache::new(dir.path()));
    let second = warm.score_article(&case_article(), &config, &cal).unwrap();
    assert_eq!(warm_stub.calls(), 0);
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
}

#[test]
fn errors_carry_article_id() {
    let (s, _) = scorer("1 | * | I cannot score this.");
    let err = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::OneStep), &calendar())
        .unwrap_err();
    assert_eq!(err.article_id, "gold-0205");
    assert_eq!(err.kind, ScoreErrorKind::Parse(ParseError::NoScoreFound));
    assert!(err.to_string().starts_with("article gold-0205:"));

    let err = s
        .score_article(&case_article(), &StrategyConfig::for_kind(StrategyKind::BuyAndHold), &calendar())
        .unwrap_err();
    assert_eq!(err.kind, ScoreErrorKind::NotPrompted(StrategyKind::BuyAndHold));
}

#[test]
fn after_cutoff_news_moves_to_next_session() {
    let (s, _) = scorer("* | * | [0.1]");
    let ts = DateTime::parse_from_rfc3339("2018-02-09T16:00:00+08:00").unwrap(); // Friday
    let a = NewsArticle::new("late", ts, "late news", None).unwrap();
    let rec = s.score_article(&a, &StrategyConfig::for_kind(StrategyKind::OneStep), &calendar()).unwrap();
    assert_eq!(rec.attributed_date, NaiveDate::from_ymd_opt(2018, 2, 12).unwrap());
}

#[test]
fn concurrent_scoring_shares_one_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (s, stub) = scorer("1 | * | Category: geopolitical event. [0.2]\n2 | * | Longer view. [0.4]");
    let s = s.with_cache(TranscriptCache::new(dir.path()));
    let cal = calendar();
    let config = StrategyConfig::for_kind(StrategyKind::Car);
    let articles: Vec<NewsArticle> = (0..16)
        .map(|i| {
            let ts = DateTime::parse_from_rfc3339("2018-03-01T10:00:00+08:00").unwrap();
            NewsArticle::new(format!("a{i}"), ts, format!("story {i}"), None).unwrap()
        })
        .collect();
    let records: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = articles
            .chunks(4)
            .map(|chunk| {
                let (s, cal, config) = (&s, &cal, &config);
                scope.spawn(move || {
                    chunk.iter().map(|a| s.score_article(a, config, cal).unwrap()).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(records.len(), 16);
    assert!(records.iter().all(|r| r.score == Score::new(0.4).unwrap()));
    assert_eq!(stub.calls(), 32);
    assert_eq!(TranscriptCache::new(dir.path()).len(), 32);
}

#[test]
fn chinese_templates_score_too() {
    let stub = Arc::new(StubBackend::parse_rules("1 | 金价 | 类别：央行政策与行动\\n分析……[0.3]").unwrap());
    let s = Scorer::new(PromptBuilder::new(TemplateSet::chinese()), stub);
    let ts = DateTime::parse_from_rfc3339("2018-03-01T10:00:00+08:00").unwrap();
    let a = NewsArticle::new("zh1", ts, "美联储加息，金价承压", None).unwrap();
    let rec = s.score_article(&a, &StrategyConfig::for_kind(StrategyKind::Classify), &calendar()).unwrap();
    assert_eq!(rec.category, Some(Category::CentralBankPolicy));
    assert_eq!(rec.score, Score::new(0.3).unwrap());
}
