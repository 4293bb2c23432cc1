//! Twenty signal days for two assets; every strategy statistic is checked
//! against hand enumeration.

use chrono::Duration;
use headline_cnn::backtest::{
    aggregate_daily, run_strategy, simulate, threshold_grid, threshold_sweep, DayPrediction, DaySignal,
    HeadlinePrediction,
};
use headline_cnn::network::ModelOutput;
use proptest::prelude::*;

mod common;
use common::*;

#[test]
fn literal_values_at_selected_thresholds() {
    let prices = book();
    let days = binary_days();
    for (t, n, pp, atp, total) in HAND_VALUES {
        let r = run_strategy(&days, &prices, t).unwrap();
        assert_eq!(r.n_trades, n, "t={t}");
        assert!((r.pp_pct - pp).abs() < 1e-10, "t={t} pp {}", r.pp_pct);
        assert!((r.atp_pct - atp).abs() < 1e-10, "t={t} atp {}", r.atp_pct);
        assert!(
            (r.total_return_pct - total).abs() < 1e-10,
            "t={t} total {}",
            r.total_return_pct
        );
    }
}

#[test]
fn every_sweep_point_matches_enumeration() {
    let prices = book();
    let days = binary_days();
    let grid = threshold_grid(0.0, 1.0, 0.01).unwrap();
    let rows = threshold_sweep(&days, &prices, &grid, false).unwrap();
    assert_eq!(rows, threshold_sweep(&days, &prices, &grid, true).unwrap());
    for row in &rows {
        let e = enumerate(row.t);
        assert_eq!(row.n_trades, e.n, "t={}", row.t);
        assert!((row.pp - e.pp).abs() < 1e-10);
        assert!((row.atp - e.atp).abs() < 1e-10);
        assert!((row.total_return - e.total).abs() < 1e-10);
    }
    for pair in rows.windows(2) {
        assert!(pair[1].n_trades <= pair[0].n_trades, "{pair:?}");
    }
}

#[test]
fn threshold_is_strict_and_trades_land_on_next_bar() {
    let prices = book();
    let days = binary_days();
    let r = run_strategy(&days, &prices, 0.5).unwrap();
    let dates = weekdays();
    // B on day 9 sits exactly at 0.5 and A on day 16 likewise: neither trades.
    assert!(!r.trades.iter().any(|t| t.asset == "B" && t.signal_date == dates[9]));
    assert!(!r.trades.iter().any(|t| t.asset == "A" && t.signal_date == dates[16]));
    // Friday signals trade on Monday.
    let friday = r.trades.iter().find(|t| t.signal_date == dates[4]).unwrap();
    assert_eq!(friday.trade_date, dates[5]);
    assert_eq!(friday.trade_date - friday.signal_date, Duration::days(3));
    for t in &r.trades {
        assert_eq!(t.return_frac, (t.exit - t.entry) / t.entry);
    }
}

#[test]
fn headline_means_feed_the_same_decisions() {
    let dates = weekdays();
    // Two headlines per day whose mean is the fixture sigma.
    let mut preds = Vec::new();
    for i in 0..20 {
        for (asset, s) in [("A", SIGMA_A[i]), ("B", SIGMA_B[i])] {
            for off in [-0.125, 0.125] {
                preds.push(HeadlinePrediction {
                    asset: asset.into(),
                    date: dates[i],
                    output: ModelOutput::Sigmoid(s + off),
                });
            }
        }
    }
    let days = aggregate_daily(&preds).unwrap();
    assert_eq!(days.len(), 40);
    let prices = book();
    for t in [0.55, 0.65, 0.75] {
        let got = run_strategy(&days, &prices, t).unwrap();
        assert_eq!(got.n_trades, enumerate(t).n);
    }
}

#[test]
fn multiclass_requires_unique_buy_argmax() {
    let dates = weekdays();
    let prices = book();
    let days: Vec<DayPrediction> = [
        ([0.2, 0.3, 0.5], 0),
        ([0.4, 0.2, 0.4], 1),
        ([0.1, 0.45, 0.45], 2),
        ([0.5, 0.1, 0.4], 3),
        ([0.05, 0.05, 0.9], 4),
    ]
    .into_iter()
    .map(|(c, i)| DayPrediction {
        asset: "A".into(),
        date: dates[i],
        signal: DaySignal::ClassMeans(c),
        n_headlines: 1,
    })
    .collect();
    let r = run_strategy(&days, &prices, 0.33).unwrap();
    let traded: Vec<_> = r.trades.iter().map(|t| t.signal_date).collect();
    assert_eq!(traded, vec![dates[0], dates[4]]);
    // Day returns +2% then -2%.
    assert!((r.total_return_pct - 100.0 * (1.02 * 0.98 - 1.0)).abs() < 1e-10);
    let rows = threshold_sweep(&days, &prices, &threshold_grid(0.33, 0.9, 0.01).unwrap(), false).unwrap();
    assert_eq!(rows.len(), 58);
    for pair in rows.windows(2) {
        assert!(pair[1].n_trades <= pair[0].n_trades);
    }
    assert_eq!(rows.last().unwrap().n_trades, 0);
}

#[test]
fn empty_decisions_give_zero_report() {
    let r = simulate(std::iter::empty(), &book()).unwrap();
    assert_eq!(r.n_trades, 0);
    assert_eq!(r.pp_pct, 0.0);
    assert_eq!(r.atp_pct, 0.0);
    assert_eq!(r.total_return_pct, 0.0);
}

#[test]
fn buys_past_the_last_bar_are_all_reported() {
    let last = *weekdays().last().unwrap();
    let err = simulate([("A", last), ("B", last)], &book()).unwrap_err();
    match err {
        headline_cnn::Error::MissingPrices(v) => assert_eq!(v.len(), 2),
        e => panic!("unexpected {e}"),
    }
}

proptest! {
    #[test]
    fn random_signals_keep_invariants(
        sigmas in prop::collection::vec(0.0f64..1.0, 40),
        means in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 40),
    ) {
        let prices = book();
        let dates = weekdays();
        let mk = |i: usize, signal| DayPrediction {
            asset: if i.is_multiple_of(2) { "A".into() } else { "B".into() },
            date: dates[i / 2],
            signal,
            n_headlines: 1,
        };
        let binary: Vec<_> = sigmas.iter().enumerate().map(|(i, &s)| mk(i, DaySignal::SigmaMean(s))).collect();
        let multi: Vec<_> = means
            .iter()
            .enumerate()
            .map(|(i, &(a, b, c))| {
                let s = a + b + c + 1e-9;
                mk(i, DaySignal::ClassMeans([a / s, b / s, c / s]))
            })
            .collect();
        for (days, grid) in [
            (&binary, threshold_grid(0.5, 0.9, 0.01).unwrap()),
            (&multi, threshold_grid(0.33, 0.9, 0.01).unwrap()),
        ] {
            let rows = threshold_sweep(days, &prices, &grid, false).unwrap();
            for pair in rows.windows(2) {
                prop_assert!(pair[1].n_trades <= pair[0].n_trades);
            }
            let r = run_strategy(days, &prices, grid[0]).unwrap();
            prop_assert!((0.0..=100.0).contains(&r.pp_pct));
            if r.n_trades > 0 {
                let mean = r.trades.iter().map(|t| t.return_frac).sum::<f64>() / r.n_trades as f64;
                prop_assert!((r.atp_pct - 100.0 * mean).abs() < 1e-10);
            }
        }
    }
}
