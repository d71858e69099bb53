//! Synthetic price/news corpus with a stub rule file.
//!
//! The expected score stream is derived here from the construction itself
//! (intended session and file order), not by calling the library.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub news: PathBuf,
    pub prices: PathBuf,
    pub rules: PathBuf,
    pub closes: Vec<(NaiveDate, f64)>,
    /// (session, score tenths) in evaluation order.
    pub expected: Vec<(NaiveDate, i32)>,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn code(tenths: i32) -> String {
    format!("code {}{:02}", if tenths < 0 { 'm' } else { 'p' }, tenths.abs())
}

/// One rule per grid value, keyed on a code word in the article text.
pub fn rules_text() -> String {
    let mut out = String::from("# keyed on the code word in each article\n");
    for t in -10..=10 {
        out.push_str(&format!(
            "* | {} | Category: gold supply and demand situation.\\nGold reacts to the report.\\nScore: [{:.1}]\n",
            code(t),
            t as f64 / 10.0
        ));
    }
    out
}

/// `days` trading days from 2018-01-02, weekdays only with one mid-run
/// holiday, and 0-3 articles per calendar day at random times, some
/// stamped in UTC.
pub fn build(days: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cst = FixedOffset::east_opt(8 * 3600).unwrap();
    let utc = FixedOffset::east_opt(0).unwrap();
    let cutoff = NaiveTime::from_hms_opt(15, 30, 0).unwrap();

    let mut trading = Vec::new();
    let mut d = NaiveDate::from_ymd_opt(2018, 1, 2).unwrap();
    let mut weekday_count = 0;
    while trading.len() < days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            weekday_count += 1;
            if weekday_count != 12 {
                trading.push(d);
            }
        }
        d += Duration::days(1);
    }

    let mut close = 270.0;
    let closes: Vec<(NaiveDate, f64)> = trading
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if i > 0 {
                close *= 1.0 + rng.random_range(-0.02..0.02);
            }
            (*d, close)
        })
        .collect();

    let last = *trading.last().unwrap();
    let mut lines = Vec::new();
    let mut expected: Vec<(NaiveDate, DateTime<FixedOffset>, String, i32)> = Vec::new();
    let mut day = trading[0];
    let mut n = 0;
    while day <= last {
        for _ in 0..rng.random_range(0..4) {
            let secs = rng.random_range(0..86_400);
            let local = cst.from_local_datetime(&day.and_hms_opt(0, 0, 0).unwrap()).unwrap()
                + Duration::seconds(secs);
            let session = if trading.contains(&day) && local.time() <= cutoff {
                Some(day)
            } else {
                trading.iter().copied().find(|t| *t > day)
            };
            let Some(session) = session else { continue };
            let tenths = rng.random_range(-10..=10);
            let id = format!("n{n:04}");
            n += 1;
            let stamp = if rng.random_bool(0.3) { local.with_timezone(&utc) } else { local };
            lines.push(serde_json::json!({
                "id": id,
                "ts": stamp.to_rfc3339(),
                "text": format!("Gold desk note {id}: {} in today's tape.", code(tenths)),
                "source": "fixture",
            }));
            expected.push((session, local, id, tenths));
        }
        day += Duration::days(1);
    }
    expected.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));

    let dir = tempfile::tempdir().unwrap();
    let news = dir.path().join("news.jsonl");
    // shuffled file order: the loader must not depend on it
    let mut shuffled = lines;
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, rng.random_range(0..=i));
    }
    let body: String = shuffled.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&news, body).unwrap();

    let prices = dir.path().join("prices.csv");
    let mut csv = String::from("date,close\n");
    for (d, c) in &closes {
        csv.push_str(&format!("{d},{c}\n"));
    }
    fs::write(&prices, csv).unwrap();

    let rules = dir.path().join("rules.txt");
    fs::write(&rules, rules_text()).unwrap();

    Fixture {
        dir,
        news,
        prices,
        rules,
        closes,
        expected: expected.into_iter().map(|(s, _, _, t)| (s, t)).collect(),
    }
}

pub fn car(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_car"));
    for a in args {
        cmd.arg(a);
    }
    cmd.env_remove("CAR_CACHE_DIR").output().expect("car binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Last value of an `equity.csv`.
pub fn final_equity(dir: &Path, file: &str) -> f64 {
    let text = fs::read_to_string(dir.join(file)).unwrap();
    let last = text.lines().last().unwrap();
    last.split(',').nth(1).unwrap().parse().unwrap()
}
