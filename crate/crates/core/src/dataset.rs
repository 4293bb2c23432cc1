//! Joins headlines, labels, the split and the text pipeline into model-ready
//! samples.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{label_sample, split_half_hourly_unique, DatasetSplit, HeadlineRecord, LabeledSample, PriceBook};
use crate::error::{Error, Result};
use crate::network::Head;
use crate::rng::{stream, Stream};
use crate::text::{build_vocabulary, encode_and_pad, tokenize, EncodedHeadline, Vocabulary};
use crate::training::Example;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Date the headline was published; trades happen on the next bar.
    pub headline_date: NaiveDate,
    pub label: LabeledSample,
    pub enc: EncodedHeadline,
}

impl Sample {
    pub fn class(&self, head: Head) -> usize {
        match head {
            Head::Binary => usize::from(self.label.binary_label),
            Head::Multiclass3 => self.label.tri_label.index(),
        }
    }

    pub fn example(&self, head: Head) -> Example {
        Example {
            enc: self.enc.clone(),
            class: self.class(head),
        }
    }
}

pub fn examples(samples: &[Sample], head: Head) -> Vec<Example> {
    samples.iter().map(|s| s.example(head)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub split: DatasetSplit,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Headlines dropped because no price bar follows their date.
    pub n_unlabelable: usize,
}

/// Splits, labels, tokenizes and encodes. The vocabulary comes from the
/// training headlines only, as does `m` unless `max_len` overrides it.
pub fn prepare(
    headlines: &[HeadlineRecord],
    prices: &PriceBook,
    portfolio: &BTreeSet<String>,
    max_len: Option<usize>,
) -> Result<PreparedData> {
    let split = split_half_hourly_unique(headlines, portfolio)?;
    let mut n_unlabelable = 0;
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for h in headlines {
        let dest = if split.train_ids.contains(&h.id) {
            &mut train_rows
        } else if split.test_ids.contains(&h.id) {
            &mut test_rows
        } else {
            continue;
        };
        match label_sample(h, prices) {
            Ok(label) => dest.push((h.date, label, tokenize(&h.text))),
            Err(Error::EndOfPriceHistory { .. }) => n_unlabelable += 1,
            Err(e) => return Err(e),
        }
    }
    if train_rows.is_empty() {
        return Err(Error::EmptyDataset("no labelable training headlines"));
    }
    if test_rows.is_empty() {
        return Err(Error::EmptyDataset("no labelable test headlines"));
    }
    if n_unlabelable > 0 {
        log::warn!("{n_unlabelable} headlines have no following price bar and were dropped");
    }
    let tokens: Vec<Vec<String>> = train_rows.iter().map(|(_, _, t)| t.clone()).collect();
    let mut vocab = build_vocabulary(&tokens)?;
    if let Some(m) = max_len {
        vocab = vocab.with_max_len(m)?;
    }
    let encode = |rows: Vec<(NaiveDate, LabeledSample, Vec<String>)>| -> Vec<Sample> {
        rows.into_iter()
            .map(|(headline_date, label, toks)| Sample {
                headline_date,
                label,
                enc: encode_and_pad(&toks, &vocab),
            })
            .collect()
    };
    let train = encode(train_rows);
    let test = encode(test_rows);
    Ok(PreparedData {
        vocab,
        split,
        train,
        test,
        n_unlabelable,
    })
}

/// Seeded partition of `0..n` into (fit, validation) index lists; the
/// validation part holds `round(n · fraction)` items, at least one and at
/// most `n - 1`.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::EmptyDataset(
            "need at least two samples to hold out a validation slice",
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction {fraction} outside (0, 1)")));
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Stream::Validation));
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}
