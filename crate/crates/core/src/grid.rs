//! Exhaustive grid search over epochs, dropout, filter-width sets and
//! embedding modes.

use serde::{Deserialize, Serialize};

use crate::embeddings::{from_pretrained, init_self_learnt, EmbeddingMode, EmbeddingTable, PretrainedVectors};
use crate::error::{Error, Result};
use crate::network::{ModelConfig, ModelParameters};
use crate::text::Vocabulary;
use crate::training::{evaluate, train, EpochStats, Example, MetricsReport, TrainOptions};

/// Where embedding tables come from. Self-learnt tables use the pretrained
/// file's statistics when a file is present, else `mean`/`std`.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingSource<'a> {
    pub pretrained: Option<&'a PretrainedVectors>,
    pub mean: f64,
    pub std: f64,
}

impl EmbeddingSource<'_> {
    pub fn build(&self, vocab: &Vocabulary, p: usize, mode: EmbeddingMode, seed: u64) -> Result<EmbeddingTable> {
        match (mode, self.pretrained) {
            (EmbeddingMode::SelfLearnt, Some(pv)) => init_self_learnt(vocab, p, pv.mean, pv.std, seed),
            (EmbeddingMode::SelfLearnt, None) => init_self_learnt(vocab, p, self.mean, self.std, seed),
            (_, Some(pv)) => {
                if pv.dim != p {
                    return Err(Error::Config(format!("pretrained dimension {} but p = {p}", pv.dim)));
                }
                from_pretrained(vocab, pv, mode, seed)
            }
            (_, None) => Err(Error::Config(format!(
                "{} mode needs pretrained vectors",
                mode.as_str()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub table: EmbeddingTable,
    pub params: ModelParameters,
    pub trace: Vec<EpochStats>,
}

/// Fresh seeded initialization followed by training.
pub fn fit_fresh(
    config: &ModelConfig,
    mode: EmbeddingMode,
    vocab: &Vocabulary,
    source: &EmbeddingSource<'_>,
    data: &[Example],
    opts: &TrainOptions,
) -> Result<TrainedModel> {
    let mut table = source.build(vocab, config.p, mode, opts.seed)?;
    let mut params = ModelParameters::init(config, opts.seed)?;
    let trace = train(data, &mut table, &mut params, config, opts)?;
    Ok(TrainedModel { table, params, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub epochs: Vec<usize>,
    pub dropout: Vec<f64>,
    pub widths: Vec<Vec<usize>>,
    pub modes: Vec<EmbeddingMode>,
}

fn dedup_by_key<T, K: PartialEq>(axis: &str, values: Vec<T>, key: impl Fn(&T) -> K) -> Vec<T> {
    let mut seen: Vec<K> = Vec::new();
    let mut out = Vec::new();
    for v in values {
        let k = key(&v);
        if seen.contains(&k) {
            log::warn!("duplicate value on grid axis {axis} ignored");
        } else {
            seen.push(k);
            out.push(v);
        }
    }
    out
}

impl GridAxes {
    /// Removes repeated values (width sets compare as sorted sets) and
    /// rejects empty axes.
    pub fn normalized(self) -> Result<Self> {
        let axes = GridAxes {
            epochs: dedup_by_key("epochs", self.epochs, |e| *e),
            dropout: dedup_by_key("dropout", self.dropout, |d| d.to_bits()),
            widths: dedup_by_key(
                "widths",
                self.widths
                    .into_iter()
                    .map(|mut w| {
                        w.sort_unstable();
                        w
                    })
                    .collect(),
                |w| w.clone(),
            ),
            modes: dedup_by_key("modes", self.modes, |m| *m),
        };
        if axes.epochs.is_empty() || axes.dropout.is_empty() || axes.widths.is_empty() || axes.modes.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        Ok(axes)
    }

    pub fn n_cells(&self) -> usize {
        self.epochs.len() * self.dropout.len() * self.widths.len() * self.modes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub widths: Vec<usize>,
    pub mode: EmbeddingMode,
    pub dropout: f64,
    pub epochs: usize,
}

impl GridCell {
    /// e.g. `w3-4_non_static_d0.5_e10`
    pub fn config_id(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        format!(
            "w{}_{}_d{}_e{}",
            widths.join("-"),
            self.mode.as_str(),
            self.dropout,
            self.epochs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config_id: String,
    pub cell: GridCell,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy)]
pub struct GridSetup {
    /// Architecture shared by every cell; widths, filters per width and
    /// dropout are overwritten per cell.
    pub total_filters: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_threshold: f64,
}

/// Trains and scores every cell, then ranks by F1, accuracy, and config id.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    axes: GridAxes,
    base: &ModelConfig,
    setup: &GridSetup,
    vocab: &Vocabulary,
    source: &EmbeddingSource<'_>,
    fit: &[Example],
    eval: &[Example],
    parallel: bool,
) -> Result<Vec<GridRow>> {
    let axes = axes.normalized()?;
    let mut cells = Vec::with_capacity(axes.n_cells());
    for widths in &axes.widths {
        for &mode in &axes.modes {
            for &dropout in &axes.dropout {
                for &epochs in &axes.epochs {
                    cells.push(GridCell {
                        widths: widths.clone(),
                        mode,
                        dropout,
                        epochs,
                    });
                }
            }
        }
    }

    let run = |cell: &GridCell| -> Result<GridRow> {
        if !setup.total_filters.is_multiple_of(cell.widths.len()) {
            return Err(Error::Config(format!(
                "{} filters do not split evenly over widths {:?}",
                setup.total_filters, cell.widths
            )));
        }
        let config = ModelConfig {
            filter_widths: cell.widths.clone(),
            filters_per_width: setup.total_filters / cell.widths.len(),
            dropout_rate: cell.dropout,
            ..base.clone()
        };
        let opts = TrainOptions::new(cell.epochs, setup.batch_size, setup.seed);
        let model = fit_fresh(&config, cell.mode, vocab, source, fit, &opts)?;
        let metrics = evaluate(eval, &model.table, &model.params, &config, setup.class_threshold)?;
        log::info!(
            "{}: accuracy {:.4}, F1 {:.4}",
            cell.config_id(),
            metrics.accuracy,
            metrics.f1
        );
        Ok(GridRow {
            config_id: cell.config_id(),
            cell: cell.clone(),
            metrics,
        })
    };

    let mut rows: Vec<GridRow> = if parallel {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect::<Result<_>>()?
    } else {
        cells.iter().map(run).collect::<Result<_>>()?
    };
    rows.sort_by(|a, b| {
        b.metrics
            .f1
            .total_cmp(&a.metrics.f1)
            .then(b.metrics.accuracy.total_cmp(&a.metrics.accuracy))
            .then_with(|| a.config_id.cmp(&b.config_id))
    });
    Ok(rows)
}

pub fn grid_to_csv(rows: &[GridRow]) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::InvalidInput(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_id", "widths", "mode", "dropout", "epochs", "accuracy", "f1"])
        .map_err(err)?;
    for r in rows {
        let widths: Vec<String> = r.cell.widths.iter().map(usize::to_string).collect();
        w.write_record([
            r.config_id.clone(),
            widths.join("-"),
            r.cell.mode.as_str().to_string(),
            r.cell.dropout.to_string(),
            r.cell.epochs.to_string(),
            r.metrics.accuracy.to_string(),
            r.metrics.f1.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}
