//! Mini-batch Adam training and classification metrics.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{backward, forward, predict, Gradients, ModelConfig, ModelOutput, ModelParameters, Phase};
use crate::rng::{stream, Stream};
use crate::text::{EncodedHeadline, PAD_INDEX};

/// One encoded headline and its class index (0/1 for the binary head,
/// avoid/inconsequential/buy = 0/1/2 for the three-class head).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub enc: EncodedHeadline,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators mirroring the model parameters and the embedding
/// table. `t` counts completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: ModelParameters,
    v: ModelParameters,
    m_emb: Matrix,
    v_emb: Matrix,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParameters, table: &EmbeddingTable) -> Self {
        let (rows, cols) = table.matrix.shape();
        AdamState {
            config,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            m_emb: Matrix::zeros(rows, cols),
            v_emb: Matrix::zeros(rows, cols),
        }
    }
}

/// Bias-corrected Adam update of one tensor at step `t` (1-based).
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, c: &AdamConfig) {
    let bc1 = 1.0 - c.beta1.powf(t as f64);
    let bc2 = 1.0 - c.beta2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteGradient(format!("{name}[{i}] = {}", values[i]))),
        None => Ok(()),
    }
}

/// One Adam step over every trainable tensor. Embedding rows are updated
/// only when the table's mode is trainable, and the padding row never.
pub fn adam_step(
    params: &mut ModelParameters,
    table: &mut EmbeddingTable,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    for (name, g) in grads.params.tensors() {
        check_finite(&name, g)?;
    }
    for (row, g) in &grads.embedding {
        check_finite(&format!("embedding.row{row}"), g)?;
    }
    state.t += 1;
    let t = state.t;
    let cfg = state.config;
    let grad_tensors = grads.params.tensors();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        adam_update(p, g, m, v, t, &cfg);
    }

    if table.mode.is_trainable() {
        let p = table.p();
        let zero = vec![0.0; p];
        for row in 0..table.n_rows() {
            if row == PAD_INDEX {
                continue;
            }
            let g = grads.embedding.get(&row).map_or(zero.as_slice(), Vec::as_slice);
            adam_update(
                table.matrix.row_mut(row),
                g,
                state.m_emb.row_mut(row),
                state.v_emb.row_mut(row),
                t,
                &cfg,
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainOptions {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainOptions {
            epochs,
            batch_size,
            seed,
            adam: AdamConfig::default(),
        }
    }
}

/// Mean loss and accuracy of the training-mode passes of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Trains `params` (and `table`, when its mode is trainable) in place.
pub fn train(
    data: &[Example],
    table: &mut EmbeddingTable,
    params: &mut ModelParameters,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("training set is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    config.validate()?;
    params.check_shapes(config)?;
    let n_classes = config.head.n_classes();
    if let Some(bad) = data.iter().find(|e| e.class >= n_classes) {
        return Err(Error::InvalidInput(format!(
            "class {} for a {} head",
            bad.class, config.head
        )));
    }

    let mut shuffle_rng = stream(opts.seed, Stream::Shuffle);
    let mut dropout_rng = stream(opts.seed, Stream::Dropout);
    let mut state = AdamState::new(opts.adam, params, table);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(opts.batch_size) {
            let mut acc = Gradients::zeros_like(params);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &data[i];
                let (out, cache) = forward(&ex.enc, table, params, config, Phase::Train(&mut dropout_rng))?;
                let cache = cache.expect("training pass returns a cache");
                loss_sum += out.loss(ex.class);
                correct += usize::from(out.predicted_class(0.5) == ex.class);
                let g = backward(&cache, ex.class, params, config, table)?;
                acc.accumulate(&g, scale);
            }
            adam_step(params, table, &acc, &mut state)?;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.6}, train accuracy {:.4}",
            stats.mean_loss,
            stats.train_accuracy
        );
        trace.push(stats);
    }
    Ok(trace)
}

/// Test-mode outputs in input order.
pub fn predict_all(
    data: &[Example],
    table: &EmbeddingTable,
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<Vec<ModelOutput>> {
    data.par_iter()
        .map(|ex| predict(&ex.enc, table, params, config))
        .collect()
}

/// Mean test-mode loss.
pub fn mean_loss(
    data: &[Example],
    table: &EmbeddingTable,
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no samples to score"));
    }
    let outputs = predict_all(data, table, params, config)?;
    Ok(outputs.iter().zip(data).map(|(o, e)| o.loss(e.class)).sum::<f64>() / data.len() as f64)
}

/// Binary counts, or a 3×3 matrix indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confusion {
    Binary { tp: u64, fp: u64, fn_: u64, tn: u64 },
    Multiclass([[u64; 3]; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let pre = ratio(tp as f64, (tp + fp) as f64);
    let rec = ratio(tp as f64, (tp + fn_) as f64);
    (pre, rec, ratio(2.0 * pre * rec, pre + rec))
}

impl MetricsReport {
    pub fn from_binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let n = tp + fp + fn_ + tn;
        let (precision, recall, f1) = prf(tp, fp, fn_);
        MetricsReport {
            n,
            accuracy: ratio((tp + tn) as f64, n as f64),
            precision,
            recall,
            f1,
            confusion: Confusion::Binary { tp, fp, fn_, tn },
        }
    }

    /// Macro averages over the three classes, each scored one-vs-rest.
    #[allow(clippy::needless_range_loop)]
    pub fn from_multiclass(matrix: [[u64; 3]; 3]) -> Self {
        let n: u64 = matrix.iter().flatten().sum();
        let correct: u64 = (0..3).map(|k| matrix[k][k]).sum();
        let (mut pre, mut rec, mut f1) = (0.0, 0.0, 0.0);
        for k in 0..3 {
            let tp = matrix[k][k];
            let fp = (0..3).filter(|&j| j != k).map(|j| matrix[j][k]).sum();
            let fn_ = (0..3).filter(|&j| j != k).map(|j| matrix[k][j]).sum();
            let (p, r, f) = prf(tp, fp, fn_);
            pre += p / 3.0;
            rec += r / 3.0;
            f1 += f / 3.0;
        }
        MetricsReport {
            n,
            accuracy: ratio(correct as f64, n as f64),
            precision: pre,
            recall: rec,
            f1,
            confusion: Confusion::Multiclass(matrix),
        }
    }

    /// Rebuilds the report from its stored counts.
    pub fn recompute(&self) -> Self {
        match self.confusion {
            Confusion::Binary { tp, fp, fn_, tn } => Self::from_binary(tp, fp, fn_, tn),
            Confusion::Multiclass(m) => Self::from_multiclass(m),
        }
    }

    /// Scores precomputed outputs. Binary outputs predict 1 iff σ ≥ `threshold`.
    pub fn from_outputs(outputs: &[ModelOutput], classes: &[usize], threshold: f64) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::EmptyDataset("no samples to evaluate"));
        }
        if outputs.len() != classes.len() {
            return Err(Error::Shape(format!(
                "{} outputs for {} labels",
                outputs.len(),
                classes.len()
            )));
        }
        match outputs[0] {
            ModelOutput::Sigmoid(_) => {
                let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
                for (o, &y) in outputs.iter().zip(classes) {
                    match (o.predicted_class(threshold), y) {
                        (1, 1) => tp += 1,
                        (1, _) => fp += 1,
                        (_, 1) => fn_ += 1,
                        _ => tn += 1,
                    }
                }
                Ok(Self::from_binary(tp, fp, fn_, tn))
            }
            ModelOutput::Softmax(_) => {
                let mut m = [[0u64; 3]; 3];
                for (o, &y) in outputs.iter().zip(classes) {
                    m[y][o.predicted_class(threshold)] += 1;
                }
                Ok(Self::from_multiclass(m))
            }
        }
    }
}

pub fn evaluate(
    data: &[Example],
    table: &EmbeddingTable,
    params: &ModelParameters,
    config: &ModelConfig,
    class_threshold: f64,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no samples to evaluate"));
    }
    let outputs = predict_all(data, table, params, config)?;
    let classes: Vec<usize> = data.iter().map(|e| e.class).collect();
    MetricsReport::from_outputs(&outputs, &classes, class_threshold)
}
