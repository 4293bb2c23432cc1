//! Day-averaged trading signals and next-day open-to-close simulation.
//!
//! Each buy on prediction day `d` becomes a trade on the asset's first bar
//! after `d`, bought at the open and sold at the close. All capital is
//! deployed every trading day with an equal split across that day's buys,
//! and day returns compound.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{PriceBook, TriLabel};
use crate::error::{Error, Result};
use crate::network::{Head, ModelOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlinePrediction {
    pub asset: String,
    /// Publication date of the headline.
    pub date: NaiveDate,
    pub output: ModelOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaySignal {
    SigmaMean(f64),
    ClassMeans([f64; 3]),
}

impl DaySignal {
    pub fn head(&self) -> Head {
        match self {
            DaySignal::SigmaMean(_) => Head::Binary,
            DaySignal::ClassMeans(_) => Head::Multiclass3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPrediction {
    pub asset: String,
    pub date: NaiveDate,
    pub signal: DaySignal,
    pub n_headlines: usize,
}

impl DayPrediction {
    pub fn decide(&self, t: f64) -> bool {
        match self.signal {
            DaySignal::SigmaMean(s) => decide_binary(s, t),
            DaySignal::ClassMeans(c) => decide_multiclass(c, t),
        }
    }
}

/// One [`DayPrediction`] per (asset, date), ordered by date then asset.
pub fn aggregate_daily(predictions: &[HeadlinePrediction]) -> Result<Vec<DayPrediction>> {
    let Some(first) = predictions.first() else {
        return Err(Error::EmptyDataset("no predictions to aggregate"));
    };
    let head = first.output.head();
    let mut groups: BTreeMap<(NaiveDate, &str), (Vec<f64>, usize)> = BTreeMap::new();
    for p in predictions {
        if p.output.head() != head {
            return Err(Error::InvalidInput(format!(
                "mixed output heads: {head} and {}",
                p.output.head()
            )));
        }
        let entry = groups
            .entry((p.date, p.asset.as_str()))
            .or_insert_with(|| (vec![0.0; head.n_outputs()], 0));
        match p.output {
            ModelOutput::Sigmoid(s) => entry.0[0] += s,
            ModelOutput::Softmax(s) => entry.0.iter_mut().zip(s).for_each(|(a, v)| *a += v),
        }
        entry.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|((date, asset), (sums, n))| {
            let mean = |k: usize| sums[k] / n as f64;
            DayPrediction {
                asset: asset.to_string(),
                date,
                signal: match head {
                    Head::Binary => DaySignal::SigmaMean(mean(0)),
                    Head::Multiclass3 => DaySignal::ClassMeans([mean(0), mean(1), mean(2)]),
                },
                n_headlines: n,
            }
        })
        .collect())
}

/// Buy iff `sigma_mean > t`.
pub fn decide_binary(sigma_mean: f64, t: f64) -> bool {
    sigma_mean > t
}

/// Buy iff `buy` is the unique largest class mean and exceeds `t`.
/// Means are ordered avoid, inconsequential, buy.
pub fn decide_multiclass(means: [f64; 3], t: f64) -> bool {
    let buy = means[TriLabel::Buy.index()];
    let others = [means[TriLabel::Avoid.index()], means[TriLabel::Inconsequential.index()]];
    others.iter().all(|&o| buy > o) && buy > t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub asset: String,
    pub signal_date: NaiveDate,
    pub trade_date: NaiveDate,
    pub entry: f64,
    pub exit: f64,
    pub return_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub n_trades: usize,
    pub n_trading_days: usize,
    /// `100 · (Π(1 + day return) − 1)`
    pub total_return_pct: f64,
    /// `100 · Π(1 + day return)`
    pub final_over_initial_pct: f64,
    pub pp_pct: f64,
    pub atp_pct: f64,
    /// Largest loss of a single trade, as a positive percentage (0 if none lost).
    pub max_single_day_loss_pct: f64,
    /// Worst equal-split portfolio day return.
    pub worst_day_return_pct: f64,
    /// Mean return of trades with a positive return.
    pub avg_correct_buy_return_pct: f64,
    pub trades: Vec<Trade>,
}

impl BacktestReport {
    fn empty() -> Self {
        BacktestReport {
            n_trades: 0,
            n_trading_days: 0,
            total_return_pct: 0.0,
            final_over_initial_pct: 100.0,
            pp_pct: 0.0,
            atp_pct: 0.0,
            max_single_day_loss_pct: 0.0,
            worst_day_return_pct: 0.0,
            avg_correct_buy_return_pct: 0.0,
            trades: Vec::new(),
        }
    }
}

/// Executes every `(asset, date)` buy. Errors list every buy with no later
/// price bar.
pub fn simulate<'a>(
    buys: impl IntoIterator<Item = (&'a str, NaiveDate)>,
    prices: &PriceBook,
) -> Result<BacktestReport> {
    let mut trades = Vec::new();
    let mut missing = Vec::new();
    for (asset, date) in buys {
        match prices.next_bar(asset, date) {
            Ok(bar) => trades.push(Trade {
                asset: asset.to_string(),
                signal_date: date,
                trade_date: bar.date,
                entry: bar.open,
                exit: bar.close,
                return_frac: bar.close_open_return(),
            }),
            Err(Error::EndOfPriceHistory { .. }) => missing.push((asset.to_string(), date)),
            Err(e) => return Err(e),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPrices(missing));
    }
    if trades.is_empty() {
        return Ok(BacktestReport::empty());
    }
    trades.sort_by(|a, b| (a.trade_date, &a.asset, a.signal_date).cmp(&(b.trade_date, &b.asset, b.signal_date)));

    let mut by_day: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for t in &trades {
        by_day.entry(t.trade_date).or_default().push(t.return_frac);
    }
    let day_returns: Vec<f64> = by_day
        .values()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let growth: f64 = day_returns.iter().map(|r| 1.0 + r).product();

    let n = trades.len();
    let returns: Vec<f64> = trades.iter().map(|t| t.return_frac).collect();
    let wins: Vec<f64> = returns.iter().copied().filter(|&r| r > 0.0).collect();
    let worst_trade = returns.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BacktestReport {
        n_trades: n,
        n_trading_days: day_returns.len(),
        total_return_pct: 100.0 * (growth - 1.0),
        final_over_initial_pct: 100.0 * growth,
        pp_pct: 100.0 * wins.len() as f64 / n as f64,
        atp_pct: 100.0 * returns.iter().sum::<f64>() / n as f64,
        max_single_day_loss_pct: 100.0 * (-worst_trade).max(0.0),
        worst_day_return_pct: 100.0 * day_returns.iter().copied().fold(f64::INFINITY, f64::min),
        avg_correct_buy_return_pct: if wins.is_empty() {
            0.0
        } else {
            100.0 * wins.iter().sum::<f64>() / wins.len() as f64
        },
        trades,
    })
}

/// Applies the threshold rule to every day prediction and simulates.
pub fn run_strategy(days: &[DayPrediction], prices: &PriceBook, t: f64) -> Result<BacktestReport> {
    simulate(
        days.iter().filter(|d| d.decide(t)).map(|d| (d.asset.as_str(), d.date)),
        prices,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub pp: f64,
    pub atp: f64,
    pub total_return: f64,
    pub n_trades: usize,
}

/// Sweep grid `start, start + step, …` up to and including `end` (to within
/// half a step). Values are rounded to 10 decimals so grid points print cleanly.
pub fn threshold_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start {
        return Err(Error::Config(format!("bad sweep grid [{start}, {end}] step {step}")));
    }
    let n = ((end - start) / step + 0.5).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

pub fn threshold_sweep(
    days: &[DayPrediction],
    prices: &PriceBook,
    grid: &[f64],
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("threshold grid must be strictly ascending".into()));
    }
    let row = |&t: &f64| -> Result<SweepRow> {
        let r = run_strategy(days, prices, t)?;
        Ok(SweepRow {
            t,
            pp: r.pp_pct,
            atp: r.atp_pct,
            total_return: r.total_return_pct,
            n_trades: r.n_trades,
        })
    };
    if parallel {
        use rayon::prelude::*;
        grid.par_iter().map(row).collect()
    } else {
        grid.iter().map(row).collect()
    }
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "pp", "atp", "total_return", "n_trades"])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.pp.to_string(),
            r.atp.to_string(),
            r.total_return.to_string(),
            r.n_trades.to_string(),
        ])
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

/// `asset,date,p0` for binary outputs, `asset,date,p0,p1,p2` for three-class.
pub fn predictions_to_csv(predictions: &[HeadlinePrediction]) -> Result<Vec<u8>> {
    let head = predictions.first().map_or(Head::Binary, |p| p.output.head());
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: &[&str] = match head {
        Head::Binary => &["asset", "date", "p0"],
        Head::Multiclass3 => &["asset", "date", "p0", "p1", "p2"],
    };
    let err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(header).map_err(err)?;
    for p in predictions {
        let mut rec = vec![p.asset.clone(), p.date.to_string()];
        match p.output {
            ModelOutput::Sigmoid(s) if head == Head::Binary => rec.push(s.to_string()),
            ModelOutput::Softmax(s) if head == Head::Multiclass3 => rec.extend(s.iter().map(f64::to_string)),
            _ => return Err(Error::InvalidInput("mixed output heads".into())),
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<HeadlinePrediction>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    let head = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["asset", "date", "p0"] => Head::Binary,
        ["asset", "date", "p0", "p1", "p2"] => Head::Multiclass3,
        other => return Err(Error::parse(path, 1, format!("unexpected header {other:?}"))),
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
            .map_err(|e| Error::parse(path, line, format!("date {:?}: {e}", &rec[1])))?;
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k]
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad probability {:?}", &rec[k])))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::parse(path, line, format!("probability {v} outside [0, 1]")))
            }
        };
        let output = match head {
            Head::Binary => ModelOutput::Sigmoid(num(2)?),
            Head::Multiclass3 => ModelOutput::Softmax([num(2)?, num(3)?, num(4)?]),
        };
        out.push(HeadlinePrediction {
            asset: rec[0].to_string(),
            date,
            output,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset("predictions file has no rows"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PriceBar;
    use approx::assert_relative_eq;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bar(asset: &str, date: &str, open: f64, close: f64) -> PriceBar {
        PriceBar {
            asset: asset.into(),
            date: d(date),
            open,
            close,
        }
    }

    fn hp(asset: &str, date: &str, output: ModelOutput) -> HeadlinePrediction {
        HeadlinePrediction {
            asset: asset.into(),
            date: d(date),
            output,
        }
    }

    #[test]
    fn aggregate_examples() {
        let days = aggregate_daily(&[
            hp("A", "2016-01-04", ModelOutput::Sigmoid(0.4)),
            hp("A", "2016-01-04", ModelOutput::Sigmoid(0.8)),
            hp("B", "2016-01-04", ModelOutput::Sigmoid(0.3)),
        ])
        .unwrap();
        assert_eq!(days.len(), 2);
        match days[0].signal {
            DaySignal::SigmaMean(s) => assert_relative_eq!(s, 0.6, epsilon = 1e-15),
            _ => panic!(),
        }
        assert_eq!((days[0].n_headlines, days[1].signal), (2, DaySignal::SigmaMean(0.3)));

        let days = aggregate_daily(&[
            hp("A", "2016-01-04", ModelOutput::Softmax([0.2, 0.3, 0.5])),
            hp("A", "2016-01-04", ModelOutput::Softmax([0.4, 0.3, 0.3])),
        ])
        .unwrap();
        match days[0].signal {
            DaySignal::ClassMeans(c) => {
                for (a, b) in c.iter().zip([0.3, 0.3, 0.4]) {
                    assert_relative_eq!(*a, b, epsilon = 1e-15);
                }
            }
            _ => panic!(),
        }

        assert!(aggregate_daily(&[
            hp("A", "2016-01-04", ModelOutput::Sigmoid(0.4)),
            hp("A", "2016-01-04", ModelOutput::Softmax([0.2, 0.3, 0.5])),
        ])
        .is_err());
        assert!(aggregate_daily(&[]).is_err());
    }

    #[test]
    fn decision_examples() {
        assert!(!decide_binary(0.5, 0.5));
        assert!(decide_binary(0.51, 0.5));
        assert!(decide_binary(0.9, 0.67));
        assert!(decide_multiclass([0.2, 0.3, 0.5], 0.45));
        assert!(!decide_multiclass([0.5, 0.1, 0.4], 0.3));
        assert!(!decide_multiclass([0.1, 0.2, 0.7], 0.75));
        assert!(!decide_multiclass([0.1, 0.45, 0.45], 0.3));
    }

    fn book() -> PriceBook {
        PriceBook::new(vec![
            bar("A", "2016-01-04", 100.0, 100.0),
            bar("A", "2016-01-05", 100.0, 101.0),
            bar("A", "2016-01-06", 100.0, 102.0),
            bar("B", "2016-01-04", 50.0, 50.0),
            bar("B", "2016-01-05", 50.0, 51.0),
            bar("B", "2016-01-06", 40.0, 40.0),
        ])
        .unwrap()
    }

    #[test]
    fn simulate_examples() {
        let r = simulate([("A", d("2016-01-04")), ("A", d("2016-01-05"))], &book()).unwrap();
        assert_relative_eq!(r.total_return_pct, 3.02, epsilon = 1e-10);
        assert_eq!(r.n_trades, 2);

        let r = simulate([("B", d("2016-01-05")), ("A", d("2016-01-05"))], &book()).unwrap();
        assert_eq!(r.n_trading_days, 1);
        assert_relative_eq!(r.total_return_pct, 1.0, epsilon = 1e-10);
        assert_relative_eq!(r.pp_pct, 50.0);
        assert_relative_eq!(r.atp_pct, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.avg_correct_buy_return_pct, 2.0, epsilon = 1e-12);

        let r = simulate(std::iter::empty(), &book()).unwrap();
        assert_eq!(
            (r.n_trades, r.total_return_pct, r.pp_pct, r.atp_pct),
            (0, 0.0, 0.0, 0.0)
        );

        match simulate([("A", d("2016-01-06")), ("C", d("2016-01-04"))], &book()) {
            Err(Error::MissingPrices(m)) => assert_eq!(m.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn losses_are_tracked() {
        let book = PriceBook::new(vec![
            bar("A", "2016-01-04", 100.0, 100.0),
            bar("A", "2016-01-05", 100.0, 97.0),
            bar("B", "2016-01-04", 100.0, 100.0),
            bar("B", "2016-01-05", 100.0, 101.0),
        ])
        .unwrap();
        let r = simulate([("A", d("2016-01-04")), ("B", d("2016-01-04"))], &book).unwrap();
        assert_relative_eq!(r.max_single_day_loss_pct, 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.worst_day_return_pct, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn sweep_grid_and_consistency() {
        let g = threshold_grid(0.5, 0.9, 0.01).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!((g[0], g[17], g[40]), (0.5, 0.67, 0.9));
        assert_eq!(threshold_grid(0.33, 0.9, 0.01).unwrap().len(), 58);

        let days = aggregate_daily(&[
            hp("A", "2016-01-04", ModelOutput::Sigmoid(0.7)),
            hp("B", "2016-01-04", ModelOutput::Sigmoid(0.55)),
            hp("A", "2016-01-05", ModelOutput::Sigmoid(0.5)),
        ])
        .unwrap();
        let rows = threshold_sweep(&days, &book(), &[0.5], false).unwrap();
        let base = run_strategy(&days, &book(), 0.5).unwrap();
        assert_eq!(
            (rows[0].n_trades, rows[0].total_return),
            (base.n_trades, base.total_return_pct)
        );
        assert_eq!(base.n_trades, 2);
        assert!(threshold_sweep(&days, &book(), &[0.6, 0.5], false).is_err());
        assert!(threshold_sweep(&days, &book(), &[], false).is_err());
        assert_eq!(
            threshold_sweep(&days, &book(), &g, true).unwrap(),
            threshold_sweep(&days, &book(), &g, false).unwrap()
        );
    }

    #[test]
    fn predictions_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for preds in [
            vec![hp("A", "2016-01-04", ModelOutput::Sigmoid(0.25))],
            vec![hp("A", "2016-01-04", ModelOutput::Softmax([0.1, 0.2, 0.7]))],
        ] {
            let path = dir.path().join("p.csv");
            std::fs::write(&path, predictions_to_csv(&preds).unwrap()).unwrap();
            assert_eq!(read_predictions_csv(&path).unwrap(), preds);
        }
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "asset,date,p0\nA,2016-01-04,1.5\n").unwrap();
        assert!(read_predictions_csv(&path)
            .unwrap_err()
            .to_string()
            .contains("bad.csv:2:"));
    }
}
