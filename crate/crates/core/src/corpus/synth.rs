//! Templated synthetic headline/price corpora with a tunable amount of
//! predictive signal.
//!
//! Each (asset, trading day) carries one phrase family, bullish or bearish,
//! shared by all of that day's headlines. The next trading day's close-open
//! move agrees in sign with that family with probability `signal_strength`
//! and disagrees otherwise, so 0.5 is pure noise and 1.0 is a perfect signal.
//! Some days arrive as bursts of near-duplicate reports of one event inside a
//! single half-hour, which is what the time-unique test split filters on.

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, NaiveTime, Weekday};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{HeadlineRecord, PriceBar};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

const BULLISH: &[&str] = &[
    "shares surge",
    "beats estimates",
    "posts record profit",
    "raises guidance",
    "upgraded to buy",
    "sees strong demand",
    "stock rallies",
    "revenue jumps",
    "boosts dividend",
    "wins major contract",
];

const BEARISH: &[&str] = &[
    "shares plunge",
    "misses estimates",
    "issues profit warning",
    "cuts guidance",
    "downgraded to sell",
    "sees weak demand",
    "stock slumps",
    "revenue drops",
    "faces lawsuit",
    "loses major contract",
];

const TOPICS: &[&str] = &[
    "quarterly results",
    "earnings call",
    "analyst meeting",
    "product launch",
    "regulatory filing",
    "investor day",
    "conference remarks",
    "board meeting",
];

const SOURCES: &[&str] = &["reuters", "bloomberg", "marketwatch", "newswire", "cnbc"];

const WHEN: &[&str] = &["early trading", "premarket", "late session", "midday", "this week"];

const COMPANIES: &[(&str, &str)] = &[
    ("ACME", "acme"),
    ("BOLT", "boltware"),
    ("CRUX", "cruxsoft"),
    ("DYNA", "dynacorp"),
    ("EONX", "eonix"),
    ("FLUX", "fluxion"),
];

/// Probability that an (asset, day) arrives only as multi-report bursts.
const BURST_PROB: f64 = 0.35;
/// Headlines are stamped between 07:00 and 20:59.
const FIRST_SLOT: u32 = 14;
const LAST_SLOT: u32 = 41;
const MIN_ABS_RETURN: f64 = 0.001;
const MAX_ABS_RETURN: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Bullish,
    Bearish,
}

/// Family of the sentiment phrase found in `text`, if any.
pub fn phrase_family(text: &str) -> Option<Family> {
    let lower = text.to_lowercase();
    if BULLISH.iter().any(|p| lower.contains(p)) {
        Some(Family::Bullish)
    } else if BEARISH.iter().any(|p| lower.contains(p)) {
        Some(Family::Bearish)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_assets: usize,
    pub n_days: usize,
    pub headlines_per_day: usize,
    pub signal_strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub headlines: Vec<HeadlineRecord>,
    pub prices: Vec<PriceBar>,
}

impl SyntheticCorpus {
    pub fn tickers(&self) -> BTreeSet<String> {
        self.prices.iter().map(|b| b.asset.clone()).collect()
    }
}

fn company(i: usize) -> (String, String) {
    match COMPANIES.get(i) {
        Some((t, n)) => (t.to_string(), n.to_string()),
        None => (format!("SYN{i}"), format!("synco{i}")),
    }
}

fn trading_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid start date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Splits `n` reports into event sizes, all ≥ 2 when `bursty` (if n allows).
fn event_sizes(rng: &mut ChaCha8Rng, n: usize, bursty: bool) -> Vec<usize> {
    if !bursty || n < 2 {
        return vec![1; n];
    }
    let mut sizes = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let mut size = if remaining <= 3 {
            remaining
        } else {
            rng.random_range(2..=3)
        };
        if remaining - size == 1 {
            size = 2;
        }
        sizes.push(size);
        remaining -= size;
    }
    sizes
}

fn render(rng: &mut ChaCha8Rng, name: &str, phrase: &str, topic: &str) -> String {
    let source = SOURCES.choose(rng).expect("non-empty");
    let when = WHEN.choose(rng).expect("non-empty");
    match rng.random_range(0..4) {
        0 => format!("{name} {phrase} after {topic}"),
        1 => format!("{source}: {name} {phrase} in {when}"),
        2 => format!("{name} {phrase} - {source}"),
        _ => format!("{name} {phrase} ahead of {topic}"),
    }
}

fn slot_time(rng: &mut ChaCha8Rng, slot: u32) -> NaiveTime {
    let minute = slot * 30 + rng.random_range(0..30);
    NaiveTime::from_hms_opt(minute / 60, minute % 60, 0).expect("valid time")
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    if cfg.n_assets == 0 || cfg.n_days == 0 || cfg.headlines_per_day == 0 {
        return Err(Error::InvalidInput(
            "n_assets, n_days and headlines_per_day must all be >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.signal_strength) {
        return Err(Error::InvalidInput(format!(
            "signal_strength {} outside [0, 1]",
            cfg.signal_strength
        )));
    }

    let mut rng = stream(cfg.seed, Stream::Synthetic);
    // One extra bar so the last headline day has a next trading day.
    let days = trading_days(cfg.n_days + 1);
    let mut headlines = Vec::new();
    let mut prices = Vec::new();

    for a in 0..cfg.n_assets {
        let (ticker, name) = company(a);
        let mut close = 50.0 + 25.0 * a as f64;
        // Family of the previous headline day; `None` before the first.
        let mut prev_family: Option<Family> = None;

        for (day_idx, &date) in days.iter().enumerate() {
            let up = match prev_family {
                Some(f) => {
                    let agree = rng.random_bool(cfg.signal_strength);
                    (f == Family::Bullish) == agree
                }
                None => rng.random_bool(0.5),
            };
            let magnitude = rng.random_range(MIN_ABS_RETURN..MAX_ABS_RETURN);
            let gap = rng.random_range(-0.005..0.005);
            let open = round4(close * (1.0 + gap));
            let r = if up { magnitude } else { -magnitude };
            close = round4(open * (1.0 + r));
            prices.push(PriceBar {
                asset: ticker.clone(),
                date,
                open,
                close,
            });

            if day_idx == cfg.n_days {
                break;
            }
            let family = if rng.random_bool(0.5) {
                Family::Bullish
            } else {
                Family::Bearish
            };
            prev_family = Some(family);
            let phrases = match family {
                Family::Bullish => BULLISH,
                Family::Bearish => BEARISH,
            };

            let bursty = rng.random_bool(BURST_PROB);
            let sizes = event_sizes(&mut rng, cfg.headlines_per_day, bursty);
            let mut free_slots: Vec<u32> = (FIRST_SLOT..=LAST_SLOT).collect();
            let mut day_items = Vec::new();
            for size in sizes {
                let phrase = phrases.choose(&mut rng).expect("non-empty");
                let topic = TOPICS.choose(&mut rng).expect("non-empty");
                let slot = if bursty {
                    let i = rng.random_range(0..free_slots.len());
                    free_slots.swap_remove(i)
                } else {
                    rng.random_range(FIRST_SLOT..=LAST_SLOT)
                };
                for _ in 0..size {
                    let time = slot_time(&mut rng, slot);
                    day_items.push((time, render(&mut rng, &name, phrase, topic)));
                }
            }
            day_items.sort();
            for (time, text) in day_items {
                headlines.push(HeadlineRecord {
                    id: 0,
                    asset: ticker.clone(),
                    date,
                    time,
                    text,
                    relevance: 1.0,
                });
            }
        }
    }

    headlines.sort_by(|x, y| (x.date, x.time, &x.asset).cmp(&(y.date, y.time, &y.asset)));
    for (i, h) in headlines.iter_mut().enumerate() {
        h.id = i as u64 + 1;
    }
    prices.sort_by(|x, y| (&x.asset, x.date).cmp(&(&y.asset, y.date)));
    Ok(SyntheticCorpus { headlines, prices })
}
