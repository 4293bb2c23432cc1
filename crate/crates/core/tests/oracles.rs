//! Layer and decision functions against naive brute-force re-implementations
//! on randomized small instances. Equality is exact.

use headline_cnn::backtest::{decide_binary, decide_multiclass};
use headline_cnn::embeddings::{nearest_neighbors, EmbeddingMode, EmbeddingTable};
use headline_cnn::linalg::Matrix;
use headline_cnn::network::{conv_forward, maxpool};
use headline_cnn::text::build_vocabulary;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{coarse, naive_conv, naive_decide_multiclass, naive_neighbors, naive_pool};

const INSTANCES: usize = 200;

#[test]
fn conv_forward_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..INSTANCES {
        let p = rng.random_range(1..=4);
        let m = rng.random_range(1..=8);
        let h = rng.random_range(1..=m);
        let x: Vec<f64> = (0..m * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..h * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-0.5..0.5);
        let got = conv_forward(&x, &f, b, h).unwrap();
        assert_eq!(got.len(), m - h + 1);
        assert_eq!(got, naive_conv(&x, &f, b, h, p));
    }
}

#[test]
fn maxpool_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..INSTANCES {
        let n: usize = rng.random_range(1..=12);
        let w = rng.random_range(1..=5);
        let c: Vec<f64> = (0..n).map(|_| coarse(&mut rng)).collect();
        let (vals, pos) = maxpool(&c, w).unwrap();
        assert_eq!(vals.len(), n.div_ceil(w));
        assert_eq!((vals, pos), naive_pool(&c, w));
    }
}

#[test]
fn nearest_neighbors_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..INSTANCES {
        let n = rng.random_range(2..=30);
        let p = rng.random_range(1..=4);
        let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let vocab = build_vocabulary(std::slice::from_ref(&tokens)).unwrap();
        let mut matrix = Matrix::zeros(n + 1, p);
        for r in 1..=n {
            // Occasional duplicate rows force similarity ties.
            let src = if r > 1 && rng.random_bool(0.2) {
                Some(rng.random_range(1..r))
            } else {
                None
            };
            for d in 0..p {
                let v = match src {
                    Some(s) => matrix.get(s, d),
                    None => coarse(&mut rng),
                };
                matrix.set(r, d, v);
            }
        }
        let table = EmbeddingTable {
            matrix,
            mode: EmbeddingMode::SelfLearnt,
            pretrained_hit_count: 0,
        };
        let q = rng.random_range(1..=n);
        let k = rng.random_range(1..=n + 2);
        let qrow = table.row(q).to_vec();
        if qrow.iter().all(|&v| v == 0.0) {
            continue;
        }

        let ordered = naive_neighbors(&table, q, k);

        let got = nearest_neighbors(&tokens[q - 1], k, &table, &vocab).unwrap();
        assert_eq!(got.len(), ordered.len());
        for ((tok, sim), (idx, esim)) in got.iter().zip(&ordered) {
            assert_eq!(tok, &tokens[idx - 1]);
            assert!((sim - esim).abs() < 1e-12, "{sim} vs {esim}");
        }
    }
}

#[test]
fn decisions_match_truth_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let grid = [0.0, 0.2, 0.25, 0.33, 0.4, 0.5, 0.6, 0.75, 1.0];
    for _ in 0..INSTANCES * 5 {
        let mut means = [0.0; 3];
        for v in &mut means {
            *v = grid[rng.random_range(0..grid.len())];
        }
        let t = grid[rng.random_range(0..grid.len())];
        assert_eq!(
            decide_multiclass(means, t),
            naive_decide_multiclass(means, t),
            "{means:?} t={t}"
        );
        assert_eq!(decide_binary(means[0], t), means[0] > t);
    }
}
