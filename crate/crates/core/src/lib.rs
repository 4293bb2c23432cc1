//! Headline-driven next-day stock movement classification with a small
//! convolutional network over word embeddings, plus the trading simulations
//! built on its predictions.
//!
//! The pipeline runs `corpus` (ingestion, labels, split) → `text`
//! (tokenize, vocabulary, padding) → `embeddings` → `network` →
//! `training` → `backtest`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod checkpoint;
pub mod corpus;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod text;
pub mod training;

pub use error::{Error, Result};
