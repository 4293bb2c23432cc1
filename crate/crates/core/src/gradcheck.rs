//! Central finite-difference verification of the analytic gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingMode, EmbeddingTable};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::network::{backward, forward, Head, ModelConfig, ModelParameters, Phase};
use crate::rng::{stream, Stream};
use crate::text::EncodedHeadline;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
pub const N_CONFIGS: usize = 20;

/// `|a - n| / max(|a|, |n|, 1e-7)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub config: ModelConfig,
    pub mode: EmbeddingMode,
    pub n_checked: usize,
    /// Coordinates where a ±step perturbation crosses a relu or pooling kink.
    pub n_skipped: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub cases: Vec<CaseReport>,
}

/// A toy problem with `m ≤ 6`, `p ≤ 4` and at most four filters.
pub struct Case {
    pub config: ModelConfig,
    pub table: EmbeddingTable,
    pub params: ModelParameters,
    pub enc: EncodedHeadline,
    pub class: usize,
}

pub fn random_case(rng: &mut impl Rng) -> Case {
    let m = rng.random_range(3..=6);
    let p = rng.random_range(1..=4);
    let n_widths = rng.random_range(1..=2usize);
    let widths: Vec<usize> = (2..=m).collect();
    let mut chosen = Vec::new();
    while chosen.len() < n_widths.min(widths.len()) {
        let h = widths[rng.random_range(0..widths.len())];
        if !chosen.contains(&h) {
            chosen.push(h);
        }
    }
    chosen.sort_unstable();
    let filters_per_width = rng.random_range(1..=4 / chosen.len());
    let head = if rng.random_bool(0.5) {
        Head::Binary
    } else {
        Head::Multiclass3
    };
    let mut config = ModelConfig {
        p,
        m,
        filter_widths: chosen,
        filters_per_width,
        pool_w: rng.random_range(1..=2),
        hidden: (2, 1),
        dropout_rate: 0.0,
        head,
    };
    let z = config.z_len();
    if z > 2 {
        let l1 = rng.random_range(2..z.min(6));
        config.hidden = (l1, rng.random_range(1..l1));
    } else {
        // Tiny feature vectors cannot satisfy the decreasing-width rule;
        // widen the bank instead.
        config.filters_per_width = 4 / config.filter_widths.len();
        config.hidden = (2, 1);
    }

    let vocab_rows = rng.random_range(2..=6);
    let mode = match rng.random_range(0..3) {
        0 => EmbeddingMode::SelfLearnt,
        1 => EmbeddingMode::Static,
        _ => EmbeddingMode::NonStatic,
    };
    let table = EmbeddingTable {
        matrix: Matrix::from_fn(
            vocab_rows,
            p,
            |r, _| if r == 0 { 0.0 } else { rng.random_range(-1.0..1.0) },
        ),
        mode,
        pretrained_hit_count: 0,
    };
    let n = rng.random_range(1..=m);
    let mut indices: Vec<usize> = (0..n).map(|_| rng.random_range(1..vocab_rows)).collect();
    indices.resize(m, 0);

    let seed = rng.random();
    let mut params = ModelParameters::init(&config, seed).expect("valid toy config");
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            // Nonzero biases move pre-activations off exact zeros.
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let class = rng.random_range(0..head.n_classes());
    Case {
        config,
        table,
        params,
        enc: EncodedHeadline { indices, true_len: n },
        class,
    }
}

struct Probe<'a> {
    case: &'a Case,
}

impl Probe<'_> {
    fn eval(&self, params: &ModelParameters, table: &EmbeddingTable) -> Result<(f64, Vec<usize>)> {
        let c = self.case;
        let mut rng = stream(0, Stream::GradCheck);
        let (out, cache) = forward(&c.enc, table, params, &c.config, Phase::Train(&mut rng))?;
        let cache = cache.expect("training pass returns a cache");
        Ok((out.loss(c.class), cache.activation_pattern()))
    }
}

/// Checks every parameter and every used embedding coordinate of one case.
/// `perturb` is added to each analytic gradient (negative control).
pub fn check_case(case: &Case, perturb: f64) -> Result<CaseReport> {
    let mut rng = stream(0, Stream::GradCheck);
    let (_, cache) = forward(
        &case.enc,
        &case.table,
        &case.params,
        &case.config,
        Phase::Train(&mut rng),
    )?;
    let cache = cache.expect("training pass returns a cache");
    let grads = backward(&cache, case.class, &case.params, &case.config, &case.table)?;
    let base_pattern = cache.activation_pattern();
    let probe = Probe { case };

    let mut n_checked = 0;
    let mut n_skipped = 0;
    let mut max_err = 0.0f64;
    let mut worst = String::new();
    let mut record = |name: String, analytic: f64, plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)| {
        if plus.1 != base_pattern || minus.1 != base_pattern {
            n_skipped += 1;
            return;
        }
        n_checked += 1;
        let numeric = (plus.0 - minus.0) / (2.0 * STEP);
        let err = relative_error(analytic + perturb, numeric);
        if err > max_err || worst.is_empty() {
            max_err = max_err.max(err);
            worst = format!("{name}: analytic {analytic:e}, numeric {numeric:e}");
        }
    };

    let names: Vec<(String, usize)> = case
        .params
        .tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let grad_tensors = grads.params.tensors();
    for (ti, (name, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let mut plus = case.params.clone();
            plus.tensors_mut()[ti].1[i] += STEP;
            let mut minus = case.params.clone();
            minus.tensors_mut()[ti].1[i] -= STEP;
            record(
                format!("{name}[{i}]"),
                grad_tensors[ti].1[i],
                probe.eval(&plus, &case.table)?,
                probe.eval(&minus, &case.table)?,
            );
        }
    }

    let p = case.config.p;
    let mut rows: Vec<usize> = case.enc.indices.iter().copied().filter(|&r| r != 0).collect();
    rows.sort_unstable();
    rows.dedup();
    if case.table.mode.is_trainable() {
        for row in rows {
            for j in 0..p {
                let mut plus = case.table.clone();
                plus.matrix.set(row, j, plus.matrix.get(row, j) + STEP);
                let mut minus = case.table.clone();
                minus.matrix.set(row, j, minus.matrix.get(row, j) - STEP);
                record(
                    format!("embedding[{row}][{j}]"),
                    grads.embedding.get(&row).map_or(0.0, |g| g[j]),
                    probe.eval(&case.params, &plus)?,
                    probe.eval(&case.params, &minus)?,
                );
            }
        }
    }
    if !case.table.mode.is_trainable() && !grads.embedding.is_empty() {
        max_err = f64::INFINITY;
        worst = "embedding gradient emitted for a frozen table".into();
    }

    Ok(CaseReport {
        config: case.config.clone(),
        mode: case.table.mode,
        n_checked,
        n_skipped,
        max_rel_error: max_err,
        worst,
    })
}

/// Runs the full suite of [`N_CONFIGS`] random cases.
pub fn run_suite(seed: u64, perturb: f64) -> Result<GradcheckReport> {
    let mut rng = stream(seed, Stream::GradCheck);
    let mut cases = Vec::with_capacity(N_CONFIGS);
    for _ in 0..N_CONFIGS {
        let case = random_case(&mut rng);
        cases.push(check_case(&case, perturb)?);
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let checked: usize = cases.iter().map(|c| c.n_checked).sum();
    Ok(GradcheckReport {
        seed,
        step: STEP,
        tolerance: TOLERANCE,
        max_rel_error,
        passed: checked > 0 && max_rel_error < TOLERANCE,
        cases,
    })
}
