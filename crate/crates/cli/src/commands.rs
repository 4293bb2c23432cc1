use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use headline_cnn::backtest::{
    aggregate_daily, predictions_to_csv, read_predictions_csv, run_strategy, sweep_to_csv, threshold_grid,
    threshold_sweep, BacktestReport, HeadlinePrediction,
};
use headline_cnn::checkpoint::Checkpoint;
use headline_cnn::corpus::{
    generate_synthetic, headlines_to_csv, load_headlines, load_prices, prices_to_csv, PriceBook, SynthConfig,
};
use headline_cnn::dataset::{examples, prepare, validation_split, PreparedData};
use headline_cnn::embeddings::{nearest_neighbors, EmbeddingMode, PretrainedVectors};
use headline_cnn::gradcheck::run_suite;
use headline_cnn::grid::{fit_fresh, grid_search, grid_to_csv, EmbeddingSource, GridRow, GridSetup};
use headline_cnn::io::{write_atomic, write_json_atomic};
use headline_cnn::network::{Head, ModelConfig};
use headline_cnn::training::{evaluate, predict_all, AdamConfig, EpochStats, Example, MetricsReport, TrainOptions};

use crate::config::{Overrides, RunConfig, SweepGrid};
use crate::{BacktestArgs, CheckpointArg, Cli, Command, GradcheckArgs, NeighborsArgs, SynthArgs, TrainArgs};

pub enum Outcome {
    Success,
    CheckFailed,
}

/// Internal numeric failures exit 1; everything else is a usage,
/// configuration or input problem and exits 2.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    use headline_cnn::Error as E;
    match e.chain().find_map(|c| c.downcast_ref::<E>()) {
        Some(E::NonFiniteGradient(_)) | Some(E::Shape(_)) => 1,
        _ => 2,
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Prepare => prepare_cmd(cli),
        Command::Train(a) => train_cmd(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Backtest(a) => backtest_cmd(cli, a, false),
        Command::Sweep(a) => backtest_cmd(cli, a, true),
        Command::Gradcheck(a) => gradcheck_cmd(cli, a),
        Command::Neighbors(a) => neighbors_cmd(cli, a),
    }
}

fn load_config(cli: &Cli, overrides: Overrides) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow!("this command needs --config <file>"))?;
    RunConfig::load(
        path,
        &Overrides {
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            ..overrides
        },
    )
}

fn out_dir(dir: &Path) -> anyhow::Result<&Path> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> anyhow::Result<()> {
    write_json_atomic(&path, value)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_bytes(path: PathBuf, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic(&path, bytes)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn synth(cli: &Cli, a: &SynthArgs) -> anyhow::Result<Outcome> {
    if a.assets == 0 || a.days == 0 || a.per_day == 0 {
        bail!("--assets, --days and --per-day must all be >= 1");
    }
    if !(0.0..=1.0).contains(&a.signal) {
        bail!("--signal must lie in [0, 1]");
    }
    let seed = cli.seed.unwrap_or(42);
    let corpus = generate_synthetic(&SynthConfig {
        seed,
        n_assets: a.assets,
        n_days: a.days,
        headlines_per_day: a.per_day,
        signal_strength: a.signal,
    })?;
    let dir = out_dir(cli.out_dir.as_deref().unwrap_or(Path::new("out")))?;
    write_bytes(dir.join("headlines.csv"), &headlines_to_csv(&corpus.headlines)?)?;
    write_bytes(dir.join("prices.csv"), &prices_to_csv(&corpus.prices)?)?;
    println!(
        "{} headlines, {} price bars for {}",
        corpus.headlines.len(),
        corpus.prices.len(),
        corpus.tickers().into_iter().collect::<Vec<_>>().join(",")
    );
    Ok(Outcome::Success)
}

struct Loaded {
    data: PreparedData,
    book: PriceBook,
}

fn load_data(cfg: &RunConfig, m: Option<usize>) -> anyhow::Result<Loaded> {
    let headlines = load_headlines(&cfg.paths.headlines, cfg.min_relevance)?;
    let book = PriceBook::new(load_prices(&cfg.paths.prices)?)?;
    let data = prepare(&headlines, &book, &cfg.portfolio(), m.or(cfg.model.m))?;
    log::info!(
        "{} train / {} test headlines over {} test dates, vocabulary {} tokens, m = {}",
        data.train.len(),
        data.test.len(),
        data.split.test_dates.len(),
        data.vocab.size(),
        data.vocab.max_len()
    );
    Ok(Loaded { data, book })
}

#[derive(Serialize)]
struct SplitSummary<'a> {
    n_train: usize,
    n_test: usize,
    n_unlabelable: usize,
    vocab_size: usize,
    max_len: usize,
    vocab_hash: String,
    test_dates: &'a std::collections::BTreeSet<chrono::NaiveDate>,
    train_ids: &'a std::collections::BTreeSet<u64>,
    test_ids: &'a std::collections::BTreeSet<u64>,
}

fn prepare_cmd(cli: &Cli) -> anyhow::Result<Outcome> {
    let cfg = load_config(cli, Overrides::default())?;
    let Loaded { data, .. } = load_data(&cfg, None)?;
    let dir = out_dir(&cfg.paths.out_dir)?;
    write_bytes(dir.join("vocab.tsv"), data.vocab.to_tsv().as_bytes())?;
    write_json(
        dir.join("split.json"),
        &SplitSummary {
            n_train: data.train.len(),
            n_test: data.test.len(),
            n_unlabelable: data.n_unlabelable,
            vocab_size: data.vocab.size(),
            max_len: data.vocab.max_len(),
            vocab_hash: data.vocab.hash(),
            test_dates: &data.split.test_dates,
            train_ids: &data.split.train_ids,
            test_ids: &data.split.test_ids,
        },
    )?;
    println!(
        "train {} / test {} headlines, {} test dates, vocabulary {}",
        data.train.len(),
        data.test.len(),
        data.split.test_dates.len(),
        data.vocab.size()
    );
    Ok(Outcome::Success)
}

fn read_pretrained(cfg: &RunConfig, data: &PreparedData) -> anyhow::Result<Option<PretrainedVectors>> {
    cfg.paths
        .pretrained
        .as_ref()
        .map(|p| PretrainedVectors::read(p, cfg.model.p, Some(&data.vocab)).map_err(Into::into))
        .transpose()
}

#[derive(Serialize)]
struct GridSummary<'a> {
    selection: &'static str,
    n_cells: usize,
    best: &'a GridRow,
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    head: Head,
    mode: EmbeddingMode,
    config: &'a ModelConfig,
    epochs: usize,
    n_train: usize,
    n_test: usize,
    pretrained_hit_count: usize,
    train: MetricsReport,
    test: MetricsReport,
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> anyhow::Result<Outcome> {
    let cfg = load_config(
        cli,
        Overrides {
            mode: a.mode,
            ..Overrides::default()
        },
    )?;
    let seed = cfg.seed();
    let Loaded { data, .. } = load_data(&cfg, None)?;
    let head = cfg.model.head;
    let train_set = examples(&data.train, head);
    let test_set = examples(&data.test, head);
    let pretrained = read_pretrained(&cfg, &data)?;
    let source = EmbeddingSource {
        pretrained: pretrained.as_ref(),
        mean: cfg.embedding.mean,
        std: cfg.embedding.std,
    };
    let dir = out_dir(&cfg.paths.out_dir)?;

    let mut config = cfg.model_config(data.vocab.max_len());
    let mut mode = cfg.embedding.mode;
    let mut epochs = cfg.training.epochs;
    if a.grid {
        let g = cfg
            .grid
            .as_ref()
            .ok_or_else(|| anyhow!("--grid needs a `grid` section in the config"))?;
        let (fit, eval, selection): (Vec<Example>, Vec<Example>, _) = if g.select_on_test {
            (train_set.clone(), test_set.clone(), "test")
        } else {
            let (fit_idx, val_idx) = validation_split(train_set.len(), g.validation_fraction, seed)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| train_set[i].clone()).collect();
            (pick(&fit_idx), pick(&val_idx), "validation")
        };
        let setup = GridSetup {
            total_filters: g.total_filters,
            batch_size: cfg.training.batch_size,
            seed,
            class_threshold: cfg.training.class_threshold,
        };
        let rows = grid_search(
            g.axes(),
            &config,
            &setup,
            &data.vocab,
            &source,
            &fit,
            &eval,
            cli.parallel,
        )?;
        write_bytes(dir.join("grid.csv"), &grid_to_csv(&rows)?)?;
        let best = &rows[0];
        write_json(
            dir.join("grid_summary.json"),
            &GridSummary {
                selection,
                n_cells: rows.len(),
                best,
            },
        )?;
        println!(
            "grid best {} (F1 {:.4}, accuracy {:.4}) of {} cells",
            best.config_id,
            best.metrics.f1,
            best.metrics.accuracy,
            rows.len()
        );
        config.filter_widths = best.cell.widths.clone();
        config.filters_per_width = g.total_filters / best.cell.widths.len();
        config.dropout_rate = best.cell.dropout;
        mode = best.cell.mode;
        epochs = best.cell.epochs;
    }
    config.validate()?;

    let opts = TrainOptions {
        epochs,
        batch_size: cfg.training.batch_size,
        seed,
        adam: AdamConfig {
            lr: cfg.training.lr,
            ..AdamConfig::default()
        },
    };
    let model = fit_fresh(&config, mode, &data.vocab, &source, &train_set, &opts)?;
    let threshold = cfg.training.class_threshold;
    let train_metrics = evaluate(&train_set, &model.table, &model.params, &config, threshold)?;
    let test_metrics = evaluate(&test_set, &model.table, &model.params, &config, threshold)?;
    let hits = model.table.pretrained_hit_count;
    let ckpt = Checkpoint::new(config.clone(), data.vocab.clone(), model.table, model.params)?;
    ckpt.save(&dir.join("checkpoint.json"))?;
    write_json::<Vec<EpochStats>>(dir.join("trace.json"), &model.trace)?;
    write_json(
        dir.join("metrics.json"),
        &TrainMetrics {
            head,
            mode,
            config: &config,
            epochs,
            n_train: train_set.len(),
            n_test: test_set.len(),
            pretrained_hit_count: hits,
            train: train_metrics.clone(),
            test: test_metrics.clone(),
        },
    )?;
    println!(
        "train accuracy {:.4}, test accuracy {:.4}, test F1 {:.4}",
        train_metrics.accuracy, test_metrics.accuracy, test_metrics.f1
    );
    Ok(Outcome::Success)
}

fn checkpoint_path(cfg_out: &Path, arg: &CheckpointArg) -> PathBuf {
    arg.checkpoint
        .clone()
        .unwrap_or_else(|| cfg_out.join("checkpoint.json"))
}

/// Loads the checkpoint and the corpus encoded with the checkpoint's `m`,
/// rejecting a vocabulary that differs from the one the model was trained on.
fn load_with_checkpoint(cfg: &RunConfig, arg: &CheckpointArg) -> anyhow::Result<(Checkpoint, Loaded)> {
    let path = checkpoint_path(&cfg.paths.out_dir, arg);
    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let loaded = load_data(cfg, Some(ckpt.config.m))?;
    ckpt.expect_vocab_hash(&loaded.data.vocab.hash())
        .context("the configured corpus does not reproduce the checkpoint's vocabulary")?;
    Ok((ckpt, loaded))
}

fn evaluate_cmd(cli: &Cli, a: &CheckpointArg) -> anyhow::Result<Outcome> {
    let cfg = load_config(cli, Overrides::default())?;
    let (ckpt, Loaded { data, .. }) = load_with_checkpoint(&cfg, a)?;
    let test_set = examples(&data.test, ckpt.config.head);
    let metrics = evaluate(
        &test_set,
        &ckpt.embedding,
        &ckpt.params,
        &ckpt.config,
        cfg.training.class_threshold,
    )?;
    write_json(out_dir(&cfg.paths.out_dir)?.join("evaluation.json"), &metrics)?;
    println!(
        "accuracy {:.4}, precision {:.4}, recall {:.4}, F1 {:.4} over {} headlines",
        metrics.accuracy, metrics.precision, metrics.recall, metrics.f1, metrics.n
    );
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct BacktestOutput<'a> {
    head: Head,
    threshold: f64,
    n_day_predictions: usize,
    report: &'a BacktestReport,
}

fn default_sweep(head: Head) -> SweepGrid {
    match head {
        Head::Binary => SweepGrid {
            start: 0.5,
            end: 0.9,
            step: 0.01,
        },
        Head::Multiclass3 => SweepGrid {
            start: 0.33,
            end: 0.9,
            step: 0.01,
        },
    }
}

fn backtest_cmd(cli: &Cli, a: &BacktestArgs, sweep_only: bool) -> anyhow::Result<Outcome> {
    let cfg = load_config(cli, Overrides::default())?;
    let dir = out_dir(&cfg.paths.out_dir)?.to_path_buf();
    let (predictions, book) = match &a.predictions {
        Some(path) => {
            let book = PriceBook::new(load_prices(&cfg.paths.prices)?)?;
            (read_predictions_csv(path)?, book)
        }
        None => {
            let (ckpt, Loaded { data, book }) = load_with_checkpoint(&cfg, &a.checkpoint)?;
            let test_set = examples(&data.test, ckpt.config.head);
            let outputs = predict_all(&test_set, &ckpt.embedding, &ckpt.params, &ckpt.config)?;
            let preds: Vec<HeadlinePrediction> = data
                .test
                .iter()
                .zip(outputs)
                .map(|(s, output)| HeadlinePrediction {
                    asset: s.label.asset.clone(),
                    date: s.headline_date,
                    output,
                })
                .collect();
            write_bytes(dir.join("predictions.csv"), &predictions_to_csv(&preds)?)?;
            (preds, book)
        }
    };
    let head = predictions
        .first()
        .map(|p| p.output.head())
        .ok_or_else(|| anyhow!("no predictions"))?;
    let wanted = a.strategy.or(cfg.strategy.head).unwrap_or(head);
    if wanted != head {
        bail!("strategy head {wanted} does not match {head} predictions");
    }
    let days = aggregate_daily(&predictions)?;

    if a.sweep || sweep_only {
        let g = cfg.strategy.sweep.unwrap_or_else(|| default_sweep(head));
        let grid = threshold_grid(g.start, g.end, g.step)?;
        let rows = threshold_sweep(&days, &book, &grid, cli.parallel)?;
        write_bytes(dir.join("sweep.csv"), &sweep_to_csv(&rows)?)?;
        println!(
            "sweep: {} thresholds from {} to {}",
            rows.len(),
            grid[0],
            grid[grid.len() - 1]
        );
    }
    if !sweep_only {
        let threshold = a.threshold.unwrap_or(cfg.strategy.threshold);
        let report = run_strategy(&days, &book, threshold)?;
        write_json(
            dir.join("backtest.json"),
            &BacktestOutput {
                head,
                threshold,
                n_day_predictions: days.len(),
                report: &report,
            },
        )?;
        println!(
            "t = {threshold}: {} trades, total return {:.2}%, PP {:.2}%, ATP {:.4}%",
            report.n_trades, report.total_return_pct, report.pp_pct, report.atp_pct
        );
    }
    Ok(Outcome::Success)
}

fn gradcheck_cmd(cli: &Cli, a: &GradcheckArgs) -> anyhow::Result<Outcome> {
    let seed = cli.seed.unwrap_or(0);
    let report = run_suite(seed, a.perturb)?;
    for (i, c) in report.cases.iter().enumerate() {
        println!(
            "case {i:2}: m={} p={} widths={:?} x{} {} {:<11} checked {:3} skipped {:2} max rel err {:.3e}",
            c.config.m,
            c.config.p,
            c.config.filter_widths,
            c.config.filters_per_width,
            c.config.head,
            c.mode.as_str(),
            c.n_checked,
            c.n_skipped,
            c.max_rel_error
        );
    }
    println!(
        "gradcheck {}: max relative error {:.3e} (tolerance {:.0e})",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_error,
        report.tolerance
    );
    if let Some(dir) = &cli.out_dir {
        write_json(out_dir(dir)?.join("gradcheck.json"), &report)?;
    }
    Ok(if report.passed {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}

fn neighbors_cmd(cli: &Cli, a: &NeighborsArgs) -> anyhow::Result<Outcome> {
    let path = match (&a.checkpoint.checkpoint, &cli.config) {
        (Some(p), _) => p.clone(),
        (None, Some(_)) => checkpoint_path(&load_config(cli, Overrides::default())?.paths.out_dir, &a.checkpoint),
        (None, None) => cli
            .out_dir
            .as_deref()
            .unwrap_or(Path::new("out"))
            .join("checkpoint.json"),
    };
    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    for (token, sim) in nearest_neighbors(&a.token, a.k, &ckpt.embedding, &ckpt.vocabulary)? {
        println!("{token}\t{sim:.6}");
    }
    Ok(Outcome::Success)
}
