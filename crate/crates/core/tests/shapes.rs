//! Tensor shapes of the standard architecture: 36 filters as 12 per width
//! over three widths, pool 2, 300-dimensional embeddings.

use std::io::Write;

use headline_cnn::embeddings::{load_pretrained, EmbeddingMode};
use headline_cnn::network::{forward, ModelConfig, ModelParameters, Phase};
use headline_cnn::text::{build_vocabulary, encode_and_pad};
use headline_cnn::training::{train, Example, TrainOptions};
use rand::SeedableRng;

#[test]
fn standard_config_shapes_follow_the_formulas() {
    let tokens: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let vocab = build_vocabulary(std::slice::from_ref(&tokens)).unwrap();

    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "{} 300", tokens.len()).unwrap();
    for (i, t) in tokens.iter().enumerate() {
        let v: Vec<String> = (0..300)
            .map(|d| format!("{}", ((i + d) % 7) as f64 / 10.0 - 0.3))
            .collect();
        writeln!(file, "{t} {}", v.join(" ")).unwrap();
    }
    let table0 = load_pretrained(&vocab, file.path(), 300, EmbeddingMode::NonStatic, 5).unwrap();
    assert_eq!(table0.matrix.shape(), (41, 300));
    assert_eq!(table0.pretrained_hit_count, 40);

    for (m, widths) in [(10, [3, 4, 5]), (20, [2, 3, 4]), (36, [3, 5, 7])] {
        let vocab = vocab.clone().with_max_len(m).unwrap();
        let config = ModelConfig::standard(m, widths);
        config.validate().unwrap();
        assert_eq!(config.total_filters(), 36);
        let expected_z: usize = widths.iter().map(|&h| 12 * (m - h + 1).div_ceil(2)).sum();
        assert_eq!(config.z_len(), expected_z);

        let params = ModelParameters::init(&config, 1).unwrap();
        params.check_shapes(&config).unwrap();
        for (bank, &h) in params.conv.iter().zip(&widths) {
            assert_eq!(bank.width, h);
            assert_eq!(bank.filters.shape(), (12, h * 300));
            assert_eq!(bank.biases.len(), 12);
        }
        assert_eq!(params.w1.shape(), (128, expected_z));
        assert_eq!(params.w2.shape(), (64, 128));
        assert_eq!(params.w_out.shape(), (1, 64));

        let enc = encode_and_pad(&tokens[..m.min(12)], &vocab);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = forward(&enc, &table0, &params, &config, Phase::Train(&mut rng)).unwrap();
        let cache = cache.unwrap();
        assert_eq!(cache.x.len(), m * 300);
        for (traces, &h) in cache.conv.iter().zip(&widths) {
            assert_eq!(traces.len(), 12);
            for t in traces {
                assert_eq!(t.map.len(), m - h + 1);
                assert_eq!(t.pooled.len(), (m - h + 1).div_ceil(2));
            }
        }
        assert_eq!(cache.z.len(), expected_z);
        assert_eq!(cache.h1_out.len(), 128);
        assert_eq!(cache.h2_out.len(), 64);
        assert_eq!(cache.logits.len(), 1);
    }
}

#[test]
fn standard_config_trains_with_batch_32() {
    let tokens: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let vocab = build_vocabulary(std::slice::from_ref(&tokens))
        .unwrap()
        .with_max_len(10)
        .unwrap();
    let config = ModelConfig::standard(10, [3, 4, 5]);
    let data: Vec<Example> = (0..40)
        .map(|i| Example {
            enc: encode_and_pad(&tokens[i % 25..i % 25 + 5], &vocab),
            class: i % 2,
        })
        .collect();
    let mut table = headline_cnn::embeddings::init_self_learnt(&vocab, 300, 0.0, 0.1, 2).unwrap();
    let mut params = ModelParameters::init(&config, 2).unwrap();
    let trace = train(&data, &mut table, &mut params, &config, &TrainOptions::new(1, 32, 2)).unwrap();
    assert_eq!(trace.len(), 1);
    assert!(trace[0].mean_loss.is_finite());
    params.check_shapes(&config).unwrap();
}

#[test]
fn too_small_first_hidden_layer_is_rejected() {
    // m = 8 pools to 12·(3 + 3 + 2) = 96 features, below the 128 hidden units.
    assert!(ModelConfig::standard(8, [3, 4, 5]).validate().is_err());
}
