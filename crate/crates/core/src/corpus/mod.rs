//! Headline and price ingestion, next-day labelling and the leakage-free
//! train/test split.

mod synth;

pub use synth::{generate_synthetic, phrase_family, Family, SynthConfig, SyntheticCorpus};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADLINE_HEADER: [&str; 6] = ["id", "asset", "date", "time", "relevance", "text"];
pub const PRICE_HEADER: [&str; 4] = ["asset", "date", "open", "close"];

/// Returns strictly above this are labelled `buy`, strictly below its
/// negation `avoid`.
pub const TRI_LABEL_BAND: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineRecord {
    pub id: u64,
    pub asset: String,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub text: String,
    pub relevance: f64,
}

impl HeadlineRecord {
    /// Index of the fixed wall-clock half-hour bucket (:00 / :30) of the day.
    pub fn half_hour_slot(&self) -> u32 {
        (self.time.hour() * 60 + self.time.minute()) / 30
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub asset: String,
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
}

impl PriceBar {
    pub fn close_open_return(&self) -> f64 {
        (self.close - self.open) / self.open
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriLabel {
    Avoid,
    Inconsequential,
    Buy,
}

impl TriLabel {
    pub const ALL: [TriLabel; 3] = [TriLabel::Avoid, TriLabel::Inconsequential, TriLabel::Buy];

    pub fn from_return(r: f64) -> Self {
        if r > TRI_LABEL_BAND {
            TriLabel::Buy
        } else if r < -TRI_LABEL_BAND {
            TriLabel::Avoid
        } else {
            TriLabel::Inconsequential
        }
    }

    /// Output-neuron index: avoid 0, inconsequential 1, buy 2.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TriLabel::Avoid => "avoid",
            TriLabel::Inconsequential => "inconsequential",
            TriLabel::Buy => "buy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub headline_id: u64,
    pub asset: String,
    pub trade_date: NaiveDate,
    pub next_day_return: f64,
    pub binary_label: u8,
    pub tri_label: TriLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<u64>,
    pub test_ids: BTreeSet<u64>,
    pub test_dates: BTreeSet<NaiveDate>,
}

/// Daily bars indexed by asset then date.
#[derive(Debug, Clone, Default)]
pub struct PriceBook {
    bars: BTreeMap<String, BTreeMap<NaiveDate, PriceBar>>,
}

impl PriceBook {
    pub fn new(bars: impl IntoIterator<Item = PriceBar>) -> Result<Self> {
        let mut book = PriceBook::default();
        for bar in bars {
            if !(bar.open > 0.0 && bar.close > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive price for {} on {}",
                    bar.asset, bar.date
                )));
            }
            let series = book.bars.entry(bar.asset.clone()).or_default();
            if series.contains_key(&bar.date) {
                return Err(Error::InvalidInput(format!(
                    "duplicate price bar for {} on {}",
                    bar.asset, bar.date
                )));
            }
            series.insert(bar.date, bar);
        }
        Ok(book)
    }

    pub fn get(&self, asset: &str, date: NaiveDate) -> Option<&PriceBar> {
        self.bars.get(asset).and_then(|s| s.get(&date))
    }

    /// First bar for `asset` strictly after `after`.
    pub fn next_bar(&self, asset: &str, after: NaiveDate) -> Result<&PriceBar> {
        use std::ops::Bound::{Excluded, Unbounded};
        self.bars
            .get(asset)
            .and_then(|s| s.range((Excluded(after), Unbounded)).next())
            .map(|(_, bar)| bar)
            .ok_or_else(|| Error::EndOfPriceHistory {
                asset: asset.to_string(),
                after,
            })
    }

    pub fn next_trading_day(&self, asset: &str, after: NaiveDate) -> Result<NaiveDate> {
        self.next_bar(asset, after).map(|bar| bar.date)
    }

    pub fn assets(&self) -> impl Iterator<Item = &str> {
        self.bars.keys().map(String::as_str)
    }

    pub fn bars(&self) -> impl Iterator<Item = &PriceBar> {
        self.bars.values().flat_map(|s| s.values())
    }
}

/// Smallest bar date for `asset` strictly greater than `after`.
pub fn next_trading_day(asset: &str, after: NaiveDate, prices: &[PriceBar]) -> Result<NaiveDate> {
    prices
        .iter()
        .filter(|b| b.asset == asset && b.date > after)
        .map(|b| b.date)
        .min()
        .ok_or_else(|| Error::EndOfPriceHistory {
            asset: asset.to_string(),
            after,
        })
}

pub fn label_sample(h: &HeadlineRecord, prices: &PriceBook) -> Result<LabeledSample> {
    let bar = prices.next_bar(&h.asset, h.date)?;
    let r = bar.close_open_return();
    Ok(LabeledSample {
        headline_id: h.id,
        asset: h.asset.clone(),
        trade_date: bar.date,
        next_day_return: r,
        binary_label: u8::from(r > 0.0),
        tri_label: TriLabel::from_return(r),
    })
}

/// Builds the test set from half-hourly unique headlines on dates where
/// every portfolio asset has at least one, and trains on everything else
/// except same-asset headlines sharing a retained test date.
pub fn split_half_hourly_unique(headlines: &[HeadlineRecord], portfolio: &BTreeSet<String>) -> Result<DatasetSplit> {
    if portfolio.is_empty() {
        return Err(Error::InvalidInput("portfolio is empty".into()));
    }
    let mut seen = HashSet::with_capacity(headlines.len());
    for h in headlines {
        if !seen.insert(h.id) {
            return Err(Error::InvalidInput(format!("duplicate headline id {}", h.id)));
        }
    }

    let mut bucket_counts: HashMap<(&str, NaiveDate, u32), usize> = HashMap::new();
    for h in headlines {
        *bucket_counts
            .entry((h.asset.as_str(), h.date, h.half_hour_slot()))
            .or_default() += 1;
    }
    let is_unique = |h: &HeadlineRecord| bucket_counts[&(h.asset.as_str(), h.date, h.half_hour_slot())] == 1;

    let mut assets_with_unique: BTreeMap<NaiveDate, BTreeSet<&str>> = BTreeMap::new();
    for h in headlines.iter().filter(|h| portfolio.contains(&h.asset)) {
        if is_unique(h) {
            assets_with_unique.entry(h.date).or_default().insert(h.asset.as_str());
        }
    }
    let test_dates: BTreeSet<NaiveDate> = assets_with_unique
        .into_iter()
        .filter(|(_, assets)| assets.len() == portfolio.len())
        .map(|(date, _)| date)
        .collect();
    if test_dates.is_empty() {
        return Err(Error::NoTestDates);
    }

    let mut split = DatasetSplit {
        test_dates,
        ..Default::default()
    };
    for h in headlines {
        let on_test_date = portfolio.contains(&h.asset) && split.test_dates.contains(&h.date);
        if !on_test_date {
            split.train_ids.insert(h.id);
        } else if is_unique(h) {
            split.test_ids.insert(h.id);
        }
    }
    Ok(split)
}

#[derive(Debug, Deserialize)]
struct HeadlineRow {
    id: String,
    asset: String,
    date: String,
    time: String,
    relevance: String,
    text: String,
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    asset: String,
    date: String,
    open: String,
    close: String,
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 0, format!("{other:?}")),
        })
}

/// Yields `(line, row)` pairs with 1-based file line numbers.
fn rows<'r, T: serde::de::DeserializeOwned + 'r>(
    path: &'r Path,
    rdr: &'r mut csv::Reader<std::fs::File>,
) -> impl Iterator<Item = (u64, Result<T>)> + 'r {
    let headers = rdr.headers().cloned().unwrap_or_default();
    rdr.records().map(move |rec| match rec {
        Ok(rec) => {
            let line = rec.position().map_or(0, |p| p.line());
            let row = rec
                .deserialize::<T>(Some(&headers))
                .map_err(|e| Error::parse(path, line, e.to_string()));
            (line, row)
        }
        Err(e) => {
            let line = e.position().map_or(0, |p| p.line());
            (line, Err(Error::parse(path, line, e.to_string())))
        }
    })
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

fn parse_f64(field: &str, s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad {field} {s:?}"))
}

/// Reads the headline CSV, keeping rows with `relevance >= min_relevance`.
pub fn load_headlines(path: impl AsRef<Path>, min_relevance: f64) -> Result<Vec<HeadlineRecord>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &HEADLINE_HEADER)?;

    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (line, row) in rows::<HeadlineRow>(path, &mut rdr) {
        let row = row?;
        let record = parse_headline_row(row).map_err(|msg| Error::parse(path, line, msg))?;
        if !ids.insert(record.id) {
            return Err(Error::parse(path, line, format!("duplicate id {}", record.id)));
        }
        if record.relevance >= min_relevance {
            out.push(record);
        }
    }
    if out.is_empty() {
        return Err(Error::NoQualifyingHeadlines {
            path: path.to_path_buf(),
            min_relevance,
        });
    }
    Ok(out)
}

fn parse_headline_row(row: HeadlineRow) -> std::result::Result<HeadlineRecord, String> {
    let id = row
        .id
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("bad id {:?}", row.id))?;
    let asset = row.asset.trim().to_string();
    if asset.is_empty() {
        return Err("empty asset".into());
    }
    let date = parse_date(&row.date)?;
    let time =
        NaiveTime::parse_from_str(row.time.trim(), "%H:%M").map_err(|e| format!("bad time {:?}: {e}", row.time))?;
    let relevance = parse_f64("relevance", &row.relevance)?;
    if !(0.0..=1.0).contains(&relevance) {
        return Err(format!("relevance {relevance} outside [0, 1]"));
    }
    if row.text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(HeadlineRecord {
        id,
        asset,
        date,
        time,
        text: row.text,
        relevance,
    })
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<Vec<PriceBar>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, &PRICE_HEADER)?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, row) in rows::<PriceRow>(path, &mut rdr) {
        let row = row?;
        let bar = parse_price_row(row).map_err(|msg| Error::parse(path, line, msg))?;
        if !seen.insert((bar.asset.clone(), bar.date)) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate bar for {} on {}", bar.asset, bar.date),
            ));
        }
        out.push(bar);
    }
    Ok(out)
}

fn parse_price_row(row: PriceRow) -> std::result::Result<PriceBar, String> {
    let asset = row.asset.trim().to_string();
    if asset.is_empty() {
        return Err("empty asset".into());
    }
    let date = parse_date(&row.date)?;
    let open = parse_f64("open", &row.open)?;
    let close = parse_f64("close", &row.close)?;
    if open <= 0.0 || close <= 0.0 {
        return Err("prices must be positive".into());
    }
    Ok(PriceBar {
        asset,
        date,
        open,
        close,
    })
}

pub fn headlines_to_csv(headlines: &[HeadlineRecord]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    wtr.write_record(HEADLINE_HEADER).map_err(io_err)?;
    for h in headlines {
        wtr.write_record([
            h.id.to_string(),
            h.asset.clone(),
            h.date.format("%Y-%m-%d").to_string(),
            h.time.format("%H:%M").to_string(),
            h.relevance.to_string(),
            h.text.clone(),
        ])
        .map_err(io_err)?;
    }
    wtr.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn prices_to_csv(prices: &[PriceBar]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    wtr.write_record(PRICE_HEADER).map_err(io_err)?;
    for b in prices {
        wtr.write_record([
            b.asset.clone(),
            b.date.format("%Y-%m-%d").to_string(),
            b.open.to_string(),
            b.close.to_string(),
        ])
        .map_err(io_err)?;
    }
    wtr.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}
