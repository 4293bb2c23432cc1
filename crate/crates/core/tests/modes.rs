//! Embedding-mode contracts observed through real training runs.

use std::io::Write;

use headline_cnn::embeddings::{load_pretrained, EmbeddingMode, EmbeddingTable, PretrainedVectors};
use headline_cnn::grid::EmbeddingSource;
use headline_cnn::network::{Head, ModelConfig, ModelParameters};
use headline_cnn::text::{build_vocabulary, encode_and_pad, Vocabulary, PAD_INDEX};
use headline_cnn::training::{train, Example, TrainOptions};

const P: usize = 4;

fn corpus() -> (Vocabulary, Vec<Example>) {
    let sentences: Vec<Vec<&str>> = vec![
        vec!["profit", "jumps", "record"],
        vec!["shares", "slump", "probe"],
        vec!["record", "orders", "beat"],
        vec!["probe", "widens", "losses"],
        vec!["beat", "profit"],
        vec!["losses", "slump", "shares", "fall"],
    ];
    let vocab = build_vocabulary(&sentences).unwrap().with_max_len(5).unwrap();
    let data = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| Example {
            enc: encode_and_pad(s, &vocab),
            class: usize::from(i % 2 == 0),
        })
        .collect();
    (vocab, data)
}

/// Vectors for every vocabulary token except `fall`, plus one unrelated word.
fn pretrained_file(vocab: &Vocabulary) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    let kept: Vec<&String> = vocab.tokens().iter().filter(|t| *t != "fall").collect();
    writeln!(f, "{} {P}", kept.len() + 1).unwrap();
    for (i, t) in kept.iter().enumerate() {
        let v: Vec<String> = (0..P)
            .map(|d| format!("{:.3}", ((i * P + d) as f64 * 0.37).sin()))
            .collect();
        writeln!(f, "{t} {}", v.join(" ")).unwrap();
    }
    writeln!(f, "unrelated 1 2 3 4").unwrap();
    f
}

fn config() -> ModelConfig {
    ModelConfig {
        p: P,
        m: 5,
        filter_widths: vec![2, 3],
        filters_per_width: 3,
        pool_w: 2,
        hidden: (4, 2),
        dropout_rate: 0.25,
        head: Head::Binary,
    }
}

fn trained(mode: EmbeddingMode) -> (EmbeddingTable, EmbeddingTable, Vocabulary) {
    let (vocab, data) = corpus();
    let file = pretrained_file(&vocab);
    let pv = PretrainedVectors::read(file.path(), P, Some(&vocab)).unwrap();
    let source = EmbeddingSource {
        pretrained: Some(&pv),
        mean: 0.0,
        std: 0.5,
    };
    let before = source.build(&vocab, P, mode, 9).unwrap();
    let mut table = before.clone();
    let mut params = ModelParameters::init(&config(), 9).unwrap();
    let mut opts = TrainOptions::new(5, 2, 9);
    opts.adam.lr = 0.05;
    train(&data, &mut table, &mut params, &config(), &opts).unwrap();
    (before, table, vocab)
}

#[test]
fn static_table_is_bit_identical_after_training() {
    let (before, after, _) = trained(EmbeddingMode::Static);
    let bits = |t: &EmbeddingTable| t.matrix.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before), bits(&after));
}

#[test]
fn non_static_moves_rows_seen_in_training() {
    let (before, after, vocab) = trained(EmbeddingMode::NonStatic);
    let changed: Vec<usize> = (1..before.n_rows())
        .filter(|&r| before.row(r) != after.row(r))
        .collect();
    assert!(!changed.is_empty());
    assert!(changed.contains(&vocab.index_of("profit").unwrap()));
}

#[test]
fn padding_row_stays_zero_in_every_mode() {
    for mode in [
        EmbeddingMode::SelfLearnt,
        EmbeddingMode::Static,
        EmbeddingMode::NonStatic,
    ] {
        let (before, after, _) = trained(mode);
        assert!(before.row(PAD_INDEX).iter().all(|&v| v == 0.0), "{mode}");
        assert!(after.row(PAD_INDEX).iter().all(|&v| v == 0.0), "{mode}");
    }
}

#[test]
fn pretrained_rows_are_copied_and_missing_tokens_are_drawn() {
    let (vocab, _) = corpus();
    let file = pretrained_file(&vocab);
    let table = load_pretrained(&vocab, file.path(), P, EmbeddingMode::Static, 3).unwrap();
    assert_eq!(table.pretrained_hit_count, vocab.size() - 1);
    let first = &vocab.tokens()[0];
    let expected: Vec<f64> = (0..P)
        .map(|d| format!("{:.3}", (d as f64 * 0.37).sin()).parse().unwrap())
        .collect();
    assert_eq!(table.row(vocab.index_of(first).unwrap()), expected.as_slice());
    let fall = table.row(vocab.index_of("fall").unwrap());
    assert!(fall.iter().any(|&v| v != 0.0));
}

#[test]
fn pretrained_modes_need_a_file() {
    let (vocab, _) = corpus();
    let source = EmbeddingSource {
        pretrained: None,
        mean: 0.0,
        std: 0.5,
    };
    assert!(source.build(&vocab, P, EmbeddingMode::Static, 1).is_err());
    assert!(source.build(&vocab, P, EmbeddingMode::NonStatic, 1).is_err());
    assert!(source.build(&vocab, P, EmbeddingMode::SelfLearnt, 1).is_ok());
}
