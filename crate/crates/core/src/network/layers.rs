//! Stateless layer primitives shared by the forward and backward passes.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Probability clamp applied before taking logs in the losses.
pub const PROB_EPS: f64 = 1e-7;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Overflow-free logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let max = z[0].max(z[1]).max(z[2]);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

pub fn loss_binary(sigma: f64, y: u8) -> f64 {
    let s = sigma.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

pub fn loss_categorical(probs: &[f64; 3], class: usize) -> f64 {
    -probs[class].clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

/// Pre-activations `q · X[(k)p .. (k)p + hp) + b` for every word offset `k`.
pub(crate) fn conv_pre(x: &[f64], filter: &[f64], bias: f64, h: usize) -> Result<Vec<f64>> {
    if h == 0 || filter.is_empty() || !filter.len().is_multiple_of(h) {
        return Err(Error::Shape(format!(
            "filter of length {} is not a multiple of width {h}",
            filter.len()
        )));
    }
    let p = filter.len() / h;
    if !x.len().is_multiple_of(p) {
        return Err(Error::Shape(format!(
            "input of length {} is not a multiple of p = {p}",
            x.len()
        )));
    }
    let m = x.len() / p;
    if h > m {
        return Err(Error::Shape(format!("filter width {h} exceeds sentence length {m}")));
    }
    Ok((0..=m - h)
        .map(|k| dot(filter, &x[k * p..k * p + h * p]) + bias)
        .collect())
}

/// Feature map of one filter: `relu(q · X[(k)p .. (k)p + hp) + b)`, stride one word.
pub fn conv_forward(x: &[f64], filter: &[f64], bias: f64, h: usize) -> Result<Vec<f64>> {
    Ok(conv_pre(x, filter, bias, h)?.into_iter().map(relu).collect())
}

/// Non-overlapping max-pooling with window and stride `w`; a trailing partial
/// window is pooled as-is. Returns the pooled values and the absolute
/// position of each maximum (leftmost on ties).
pub fn maxpool(c: &[f64], w: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if c.is_empty() {
        return Err(Error::Shape("max-pool of an empty feature map".into()));
    }
    if w == 0 {
        return Err(Error::Shape("pool size must be >= 1".into()));
    }
    let mut pooled = Vec::with_capacity(c.len().div_ceil(w));
    let mut argmax = Vec::with_capacity(pooled.capacity());
    for (chunk_idx, chunk) in c.chunks(w).enumerate() {
        let mut best = 0;
        for (i, &v) in chunk.iter().enumerate() {
            if v > chunk[best] {
                best = i;
            }
        }
        pooled.push(chunk[best]);
        argmax.push(chunk_idx * w + best);
    }
    Ok((pooled, argmax))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// `act(W · zprev + b)`
pub fn dense_forward(zprev: &[f64], w: &Matrix, b: &[f64], act: Activation) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(Error::Shape(format!(
            "bias of length {} for {} neurons",
            b.len(),
            w.rows()
        )));
    }
    let mut out = w.matvec(zprev)?;
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
        if act == Activation::Relu {
            *o = relu(*o);
        }
    }
    Ok(out)
}

/// Whether a pass samples dropout masks (training) or applies the
/// expected-value scaling (testing).
pub enum Phase<'a> {
    Train(&'a mut dyn RngCore),
    Test,
}

impl Phase<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train(_))
    }
}

/// Classic dropout: in training each element is zeroed with probability
/// `rate`; at test time every element is scaled by `1 - rate`. Returns the
/// output and the multiplicative mask that produced it.
pub fn apply_dropout(v: &[f64], rate: f64, phase: &mut Phase<'_>) -> (Vec<f64>, Vec<f64>) {
    let mask: Vec<f64> = match phase {
        Phase::Train(rng) if rate > 0.0 => v
            .iter()
            .map(|_| if rng.random_bool(rate) { 0.0 } else { 1.0 })
            .collect(),
        Phase::Train(_) => vec![1.0; v.len()],
        Phase::Test => vec![1.0 - rate; v.len()],
    };
    let out = v.iter().zip(&mask).map(|(x, m)| x * m).collect();
    (out, mask)
}
