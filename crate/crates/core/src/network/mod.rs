//! The headline CNN: embedding lookup, one or more banks of word-aligned
//! convolution filters with relu, max-pooling, two relu hidden layers with
//! dropout, and a sigmoid (binary) or softmax (three-class) output.

mod layers;

pub use layers::{
    apply_dropout, conv_forward, dense_forward, loss_binary, loss_categorical, maxpool, relu, sigmoid, softmax3,
    Activation, Phase, PROB_EPS,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{lookup_concat, EmbeddingTable};
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::rng::{stream, Stream};
use crate::text::{EncodedHeadline, PAD_INDEX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Binary,
    Multiclass3,
}

impl Head {
    pub fn n_outputs(self) -> usize {
        match self {
            Head::Binary => 1,
            Head::Multiclass3 => 3,
        }
    }

    pub fn n_classes(self) -> usize {
        match self {
            Head::Binary => 2,
            Head::Multiclass3 => 3,
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Binary => "binary",
            Head::Multiclass3 => "multiclass3",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Head::Binary),
            "multiclass3" | "multiclass" => Ok(Head::Multiclass3),
            other => Err(Error::Config(format!("unknown head {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub p: usize,
    /// Padded sentence length.
    pub m: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub pool_w: usize,
    pub hidden: (usize, usize),
    pub dropout_rate: f64,
    pub head: Head,
}

impl ModelConfig {
    /// p = 300, 36 filters as 12 per width over three widths, pool 2,
    /// hidden (128, 64), dropout 0.5.
    pub fn standard(m: usize, filter_widths: [usize; 3]) -> Self {
        ModelConfig {
            p: 300,
            m,
            filter_widths: filter_widths.to_vec(),
            filters_per_width: 12,
            pool_w: 2,
            hidden: (128, 64),
            dropout_rate: 0.5,
            head: Head::Binary,
        }
    }

    pub fn total_filters(&self) -> usize {
        self.filters_per_width * self.filter_widths.len()
    }

    /// `m - h + 1`
    pub fn feature_map_len(&self, h: usize) -> usize {
        self.m + 1 - h
    }

    /// `ceil((m - h + 1) / w)`
    pub fn pooled_len(&self, h: usize) -> usize {
        self.feature_map_len(h).div_ceil(self.pool_w)
    }

    /// Length of the concatenated pooled vector `z`.
    pub fn z_len(&self) -> usize {
        self.filter_widths
            .iter()
            .map(|&h| self.filters_per_width * self.pooled_len(h))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.p == 0 || self.m == 0 {
            return fail(format!("p ({}) and m ({}) must be >= 1", self.p, self.m));
        }
        if self.filter_widths.is_empty() || self.filters_per_width == 0 {
            return fail("at least one filter width and one filter per width required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for &h in &self.filter_widths {
            if h < 2 {
                return fail(format!("filter width {h} < 2"));
            }
            if h > self.m {
                return fail(format!("filter width {h} exceeds padded length m = {}", self.m));
            }
            if !seen.insert(h) {
                return fail(format!("duplicate filter width {h}"));
            }
        }
        if self.pool_w == 0 {
            return fail("pool size must be >= 1".into());
        }
        let (l1, l2) = self.hidden;
        if l2 == 0 || l2 >= l1 {
            return fail(format!("hidden sizes must decrease: got ({l1}, {l2})"));
        }
        if l1 >= self.z_len() {
            return fail(format!(
                "first hidden layer ({l1}) must be smaller than the pooled feature length ({})",
                self.z_len()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// Filters of one width: `filters` is `n × (h·p)`, one bias per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBank {
    pub width: usize,
    pub filters: Matrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub conv: Vec<ConvBank>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

impl ModelParameters {
    /// Glorot-uniform weights and zero biases, drawn from the seed's
    /// parameter-init stream.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, Stream::ParamInit);
        let n = config.filters_per_width;
        let conv = config
            .filter_widths
            .iter()
            .map(|&h| ConvBank {
                width: h,
                filters: glorot(&mut rng, n, h * config.p, h * config.p, h * n),
                biases: vec![0.0; n],
            })
            .collect();
        let (l1, l2) = config.hidden;
        let z = config.z_len();
        let k = config.head.n_outputs();
        Ok(ModelParameters {
            conv,
            w1: glorot(&mut rng, l1, z, z, l1),
            b1: vec![0.0; l1],
            w2: glorot(&mut rng, l2, l1, l1, l2),
            b2: vec![0.0; l2],
            w_out: glorot(&mut rng, k, l2, l2, k),
            b_out: vec![0.0; k],
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParameters {
            conv: self
                .conv
                .iter()
                .map(|b| ConvBank {
                    width: b.width,
                    filters: Matrix::zeros(b.filters.rows(), b.filters.cols()),
                    biases: vec![0.0; b.biases.len()],
                })
                .collect(),
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
            w_out: Matrix::zeros(self.w_out.rows(), self.w_out.cols()),
            b_out: vec![0.0; self.b_out.len()],
        }
    }

    /// Every tensor, flattened, in a fixed order with a stable name.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for b in &self.conv {
            out.push((format!("conv{}.filters", b.width), b.filters.as_slice()));
            out.push((format!("conv{}.biases", b.width), &b.biases));
        }
        out.push(("w1".into(), self.w1.as_slice()));
        out.push(("b1".into(), &self.b1));
        out.push(("w2".into(), self.w2.as_slice()));
        out.push(("b2".into(), &self.b2));
        out.push(("w_out".into(), self.w_out.as_slice()));
        out.push(("b_out".into(), &self.b_out));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for b in &mut self.conv {
            out.push((format!("conv{}.filters", b.width), b.filters.as_mut_slice()));
            out.push((format!("conv{}.biases", b.width), &mut b.biases));
        }
        out.push(("w1".into(), self.w1.as_mut_slice()));
        out.push(("b1".into(), &mut self.b1));
        out.push(("w2".into(), self.w2.as_mut_slice()));
        out.push(("b2".into(), &mut self.b2));
        out.push(("w_out".into(), self.w_out.as_mut_slice()));
        out.push(("b_out".into(), &mut self.b_out));
        out
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &ModelParameters, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(scale, src, dst);
        }
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParameters::init_shapes(config);
        let got: Vec<(String, usize)> = self.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
        if got != expected {
            return Err(Error::Shape(format!(
                "parameters {got:?} do not match configuration {expected:?}"
            )));
        }
        let dims_ok = self
            .conv
            .iter()
            .zip(&config.filter_widths)
            .all(|(b, &h)| b.width == h && b.filters.shape() == (config.filters_per_width, h * config.p))
            && self.w1.shape() == (config.hidden.0, config.z_len())
            && self.w2.shape() == (config.hidden.1, config.hidden.0)
            && self.w_out.shape() == (config.head.n_outputs(), config.hidden.1);
        if !dims_ok {
            return Err(Error::Shape(
                "parameter matrix dimensions do not match configuration".into(),
            ));
        }
        Ok(())
    }

    fn init_shapes(config: &ModelConfig) -> Vec<(String, usize)> {
        let n = config.filters_per_width;
        let mut out = Vec::new();
        for &h in &config.filter_widths {
            out.push((format!("conv{h}.filters"), n * h * config.p));
            out.push((format!("conv{h}.biases"), n));
        }
        let (l1, l2) = config.hidden;
        let k = config.head.n_outputs();
        out.push(("w1".into(), l1 * config.z_len()));
        out.push(("b1".into(), l1));
        out.push(("w2".into(), l2 * l1));
        out.push(("b2".into(), l2));
        out.push(("w_out".into(), k * l2));
        out.push(("b_out".into(), k));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOutput {
    Sigmoid(f64),
    Softmax([f64; 3]),
}

impl ModelOutput {
    pub fn head(&self) -> Head {
        match self {
            ModelOutput::Sigmoid(_) => Head::Binary,
            ModelOutput::Softmax(_) => Head::Multiclass3,
        }
    }

    /// Binary: 1 iff σ ≥ `threshold`. Multiclass: argmax (lowest index on ties).
    pub fn predicted_class(&self, threshold: f64) -> usize {
        match *self {
            ModelOutput::Sigmoid(s) => usize::from(s >= threshold),
            ModelOutput::Softmax(s) => {
                let mut best = 0;
                for k in 1..3 {
                    if s[k] > s[best] {
                        best = k;
                    }
                }
                best
            }
        }
    }

    pub fn loss(&self, class: usize) -> f64 {
        match self {
            ModelOutput::Sigmoid(s) => loss_binary(*s, u8::from(class == 1)),
            ModelOutput::Softmax(s) => loss_categorical(s, class),
        }
    }

    /// Gradient of the loss with respect to the output logits. The clamp only
    /// guards the reported loss value; the gradient is the unclamped one.
    fn logit_grad(&self, class: usize) -> Vec<f64> {
        match self {
            ModelOutput::Sigmoid(s) => vec![s - f64::from(u8::from(class == 1))],
            ModelOutput::Softmax(s) => (0..3).map(|k| s[k] - f64::from(u8::from(k == class))).collect(),
        }
    }
}

/// Activations of one filter: pre-relu map, relu map and pooling argmaxes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub pre: Vec<f64>,
    pub map: Vec<f64>,
    pub pooled: Vec<f64>,
    pub argmax: Vec<usize>,
}

/// Everything the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub indices: Vec<usize>,
    pub x: Vec<f64>,
    /// `[bank][filter]`
    pub conv: Vec<Vec<FilterTrace>>,
    pub z: Vec<f64>,
    pub h1_pre: Vec<f64>,
    pub mask1: Vec<f64>,
    pub h1_out: Vec<f64>,
    pub h2_pre: Vec<f64>,
    pub mask2: Vec<f64>,
    pub h2_out: Vec<f64>,
    pub logits: Vec<f64>,
    pub output: ModelOutput,
}

impl ForwardCache {
    /// Relu on/off bits and pooling choices; constant wherever the loss is
    /// smooth in the parameters.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        for bank in &self.conv {
            for f in bank {
                sig.extend(f.pre.iter().map(|&v| usize::from(v > 0.0)));
                sig.extend_from_slice(&f.argmax);
            }
        }
        sig.extend(self.h1_pre.iter().map(|&v| usize::from(v > 0.0)));
        sig.extend(self.h2_pre.iter().map(|&v| usize::from(v > 0.0)));
        sig
    }
}

/// Runs the network on one encoded headline. The cache is returned only for
/// training passes.
pub fn forward(
    enc: &EncodedHeadline,
    table: &EmbeddingTable,
    params: &ModelParameters,
    config: &ModelConfig,
    mut phase: Phase<'_>,
) -> Result<(ModelOutput, Option<ForwardCache>)> {
    if enc.indices.len() != config.m || table.p() != config.p {
        return Err(Error::Shape(format!(
            "input of length {} with p = {} for a model with m = {}, p = {}",
            enc.indices.len(),
            table.p(),
            config.m,
            config.p
        )));
    }
    if params.conv.len() != config.filter_widths.len() {
        return Err(Error::Shape("filter banks do not match configured widths".into()));
    }
    let x = lookup_concat(enc, table)?;

    let mut conv = Vec::with_capacity(params.conv.len());
    let mut z = Vec::with_capacity(config.z_len());
    for bank in &params.conv {
        let mut traces = Vec::with_capacity(bank.filters.rows());
        for f in 0..bank.filters.rows() {
            let pre = layers::conv_pre(&x, bank.filters.row(f), bank.biases[f], bank.width)?;
            let map: Vec<f64> = pre.iter().copied().map(relu).collect();
            let (pooled, argmax) = maxpool(&map, config.pool_w)?;
            z.extend_from_slice(&pooled);
            traces.push(FilterTrace {
                pre,
                map,
                pooled,
                argmax,
            });
        }
        conv.push(traces);
    }

    let h1_pre = dense_forward(&z, &params.w1, &params.b1, Activation::Identity)?;
    let (h1_out, mask1) = apply_dropout(
        &h1_pre.iter().copied().map(relu).collect::<Vec<_>>(),
        config.dropout_rate,
        &mut phase,
    );
    let h2_pre = dense_forward(&h1_out, &params.w2, &params.b2, Activation::Identity)?;
    let (h2_out, mask2) = apply_dropout(
        &h2_pre.iter().copied().map(relu).collect::<Vec<_>>(),
        config.dropout_rate,
        &mut phase,
    );
    let logits = dense_forward(&h2_out, &params.w_out, &params.b_out, Activation::Identity)?;
    let output = match config.head {
        Head::Binary => ModelOutput::Sigmoid(sigmoid(logits[0])),
        Head::Multiclass3 => ModelOutput::Softmax(softmax3([logits[0], logits[1], logits[2]])),
    };

    let cache = phase.is_train().then(|| ForwardCache {
        indices: enc.indices.clone(),
        x,
        conv,
        z,
        h1_pre,
        mask1,
        h1_out,
        h2_pre,
        mask2,
        h2_out,
        logits,
        output,
    });
    Ok((output, cache))
}

/// Test-mode prediction.
pub fn predict(
    enc: &EncodedHeadline,
    table: &EmbeddingTable,
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<ModelOutput> {
    forward(enc, table, params, config, Phase::Test).map(|(out, _)| out)
}

/// Per-sample loss gradients. Embedding rows are sparse and keyed by index;
/// the padding row never appears.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ModelParameters,
    pub embedding: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        Gradients {
            params: params.zeros_like(),
            embedding: BTreeMap::new(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        self.params.add_scaled(&other.params, scale);
        for (&row, g) in &other.embedding {
            let dst = self.embedding.entry(row).or_insert_with(|| vec![0.0; g.len()]);
            axpy(scale, g, dst);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
        for g in self.embedding.values_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Exact gradients of the per-sample loss for the pass recorded in `cache`.
pub fn backward(
    cache: &ForwardCache,
    class: usize,
    params: &ModelParameters,
    config: &ModelConfig,
    table: &EmbeddingTable,
) -> Result<Gradients> {
    if class >= config.head.n_classes() {
        return Err(Error::InvalidInput(format!("class {class} for a {} head", config.head)));
    }
    let p = config.p;
    let mut g = Gradients::zeros_like(params);

    let d_logits = cache.output.logit_grad(class);
    g.params.w_out.add_outer(&d_logits, &cache.h2_out);
    g.params.b_out.copy_from_slice(&d_logits);

    let d_h2 = relu_dropout_grad(&params.w_out.matvec_t(&d_logits), &cache.mask2, &cache.h2_pre);
    g.params.w2.add_outer(&d_h2, &cache.h1_out);
    g.params.b2.copy_from_slice(&d_h2);

    let d_h1 = relu_dropout_grad(&params.w2.matvec_t(&d_h2), &cache.mask1, &cache.h1_pre);
    g.params.w1.add_outer(&d_h1, &cache.z);
    g.params.b1.copy_from_slice(&d_h1);

    let d_z = params.w1.matvec_t(&d_h1);
    let mut d_x = vec![0.0; cache.x.len()];
    let mut offset = 0;
    for ((bank, traces), g_bank) in params.conv.iter().zip(&cache.conv).zip(&mut g.params.conv) {
        let span = bank.width * p;
        for (f, trace) in traces.iter().enumerate() {
            let mut d_map = vec![0.0; trace.map.len()];
            for (j, &pos) in trace.argmax.iter().enumerate() {
                d_map[pos] += d_z[offset + j];
            }
            offset += trace.argmax.len();
            for (k, (&pre, &d)) in trace.pre.iter().zip(&d_map).enumerate() {
                if pre <= 0.0 || d == 0.0 {
                    continue;
                }
                let window = &cache.x[k * p..k * p + span];
                axpy(d, window, g_bank.filters.row_mut(f));
                g_bank.biases[f] += d;
                axpy(d, bank.filters.row(f), &mut d_x[k * p..k * p + span]);
            }
        }
    }

    if table.mode.is_trainable() {
        for (t, &row) in cache.indices.iter().enumerate() {
            if row == PAD_INDEX {
                continue;
            }
            let dst = g.embedding.entry(row).or_insert_with(|| vec![0.0; p]);
            axpy(1.0, &d_x[t * p..(t + 1) * p], dst);
        }
    }
    Ok(g)
}

fn relu_dropout_grad(d_out: &[f64], mask: &[f64], pre: &[f64]) -> Vec<f64> {
    d_out
        .iter()
        .zip(mask)
        .zip(pre)
        .map(|((&d, &m), &z)| if z > 0.0 { d * m } else { 0.0 })
        .collect()
}
