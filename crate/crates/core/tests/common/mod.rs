//! Brute-force oracles and fixtures shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use headline_cnn::backtest::{DayPrediction, DaySignal};
use headline_cnn::corpus::{PriceBar, PriceBook};
use headline_cnn::embeddings::EmbeddingTable;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn naive_conv(x: &[f64], filter: &[f64], bias: f64, h: usize, p: usize) -> Vec<f64> {
    let m = x.len() / p;
    let mut out = Vec::new();
    for k in 0..m + 1 - h {
        let mut s = 0.0;
        for j in 0..h {
            for d in 0..p {
                s += filter[j * p + d] * x[(k + j) * p + d];
            }
        }
        s += bias;
        out.push(if s > 0.0 { s } else { 0.0 });
    }
    out
}

pub fn naive_pool(c: &[f64], w: usize) -> (Vec<f64>, Vec<usize>) {
    let mut vals = Vec::new();
    let mut pos = Vec::new();
    let mut start = 0;
    while start < c.len() {
        let end = (start + w).min(c.len());
        let mut best = start;
        for i in start..end {
            if c[i] > c[best] {
                best = i;
            }
        }
        vals.push(c[best]);
        pos.push(best);
        start = end;
    }
    (vals, pos)
}

/// Small integers make ties common, which exercises leftmost tie-breaking.
pub fn coarse(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-3i32..=3) as f64 * 0.5
}

pub fn naive_cosine(u: &[f64], v: &[f64]) -> f64 {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    (uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0)
}

/// Exhaustive scan: most similar first, lower index first on ties; zero rows
/// and the query itself are skipped.
pub fn naive_neighbors(table: &EmbeddingTable, q: usize, k: usize) -> Vec<(usize, f64)> {
    let qrow = table.row(q).to_vec();
    let mut expected: Vec<(usize, f64)> = Vec::new();
    for r in 1..table.n_rows() {
        let row = table.row(r);
        if r == q || row.iter().all(|&v| v == 0.0) {
            continue;
        }
        expected.push((r, naive_cosine(&qrow, row)));
    }
    let mut ordered = Vec::new();
    while !expected.is_empty() && ordered.len() < k {
        let mut best = 0;
        for i in 1..expected.len() {
            let (bi, bs) = expected[best];
            let (ci, cs) = expected[i];
            if cs > bs || (cs == bs && ci < bi) {
                best = i;
            }
        }
        ordered.push(expected.remove(best));
    }
    ordered
}

/// Buy iff the buy mean beats both others strictly and exceeds `t`.
pub fn naive_decide_multiclass(means: [f64; 3], t: f64) -> bool {
    let unique_max = (0..3).filter(|&i| means[i] >= means[2]).count() == 1;
    unique_max && means[2] > t
}

/// Close minus open (open is 100) for each of the 21 weekday bars.
pub const DELTA_A: [i32; 21] = [0, 2, -1, 3, 1, -2, 4, 0, -1, 2, 1, -3, 2, 1, 1, -1, 3, -2, 2, 1, -1];
pub const DELTA_B: [i32; 21] = [0, -1, 2, -2, 1, 3, -1, 2, 1, -2, 0, 2, -1, 3, -2, 1, 1, 2, -3, 1, 2];
pub const SIGMA_A: [f64; 20] = [
    0.55, 0.45, 0.8, 0.62, 0.3, 0.9, 0.51, 0.49, 0.7, 0.66, 0.2, 0.75, 0.58, 0.61, 0.4, 0.85, 0.5, 0.72, 0.68, 0.95,
];
pub const SIGMA_B: [f64; 20] = [
    0.35, 0.7, 0.52, 0.81, 0.6, 0.44, 0.77, 0.9, 0.3, 0.5, 0.64, 0.57, 0.83, 0.2, 0.69, 0.73, 0.56, 0.48, 0.59, 0.61,
];

pub fn weekdays() -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    (0..29)
        .map(|d| start + Duration::days(d))
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

pub fn book() -> PriceBook {
    let days = weekdays();
    let mut bars = Vec::new();
    for (asset, deltas) in [("A", DELTA_A), ("B", DELTA_B)] {
        for (d, delta) in days.iter().zip(deltas) {
            bars.push(PriceBar {
                asset: asset.into(),
                date: *d,
                open: 100.0,
                close: 100.0 + delta as f64,
            });
        }
    }
    PriceBook::new(bars).unwrap()
}

pub fn binary_days() -> Vec<DayPrediction> {
    let days = weekdays();
    let mut out = Vec::new();
    for i in 0..20 {
        for (asset, s) in [("A", SIGMA_A[i]), ("B", SIGMA_B[i])] {
            out.push(DayPrediction {
                asset: asset.into(),
                date: days[i],
                signal: DaySignal::SigmaMean(s),
                n_headlines: 1,
            });
        }
    }
    out
}

/// `(t, n_trades, pp, atp, total_return)` worked out by hand.
pub const HAND_VALUES: [(f64, usize, f64, f64, f64); 5] = [
    (0.5, 28, 85.71428571428571, 1.428571428571429, 36.59026255940301),
    (0.6, 20, 95.0, 1.7, 35.20828229727044),
    (0.7, 11, 90.9090909090909, 1.9090909090909092, 20.61086104592791),
    (0.8, 6, 83.33333333333333, 1.8333333333333333, 11.425792306399995),
    (0.9, 1, 0.0, -1.0, -1.0),
];

pub struct Enumerated {
    pub n: usize,
    pub pp: f64,
    pub atp: f64,
    pub total: f64,
}

/// Independent enumeration straight from the fixture tables.
pub fn enumerate(t: f64) -> Enumerated {
    let mut all = Vec::new();
    let mut growth = 1.0;
    for i in 0..20 {
        let mut today = Vec::new();
        if SIGMA_A[i] > t {
            today.push(DELTA_A[i + 1] as f64 / 100.0);
        }
        if SIGMA_B[i] > t {
            today.push(DELTA_B[i + 1] as f64 / 100.0);
        }
        if !today.is_empty() {
            growth *= 1.0 + today.iter().sum::<f64>() / today.len() as f64;
        }
        all.extend(today);
    }
    let n = all.len();
    if n == 0 {
        return Enumerated {
            n,
            pp: 0.0,
            atp: 0.0,
            total: 0.0,
        };
    }
    Enumerated {
        n,
        pp: 100.0 * all.iter().filter(|&&r| r > 0.0).count() as f64 / n as f64,
        atp: 100.0 * all.iter().sum::<f64>() / n as f64,
        total: 100.0 * (growth - 1.0),
    }
}
