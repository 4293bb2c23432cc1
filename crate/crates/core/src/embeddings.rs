//! Word-embedding table: self-learnt, static or non-static rows over the
//! vocabulary, plus pretrained word2vec (text format) loading and cosine
//! neighbour queries.
//!
//! Row 0 belongs to the padding feature. It is zero at construction and the
//! optimizer never touches it, whatever the mode.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::rng::{stream, Stream};
use crate::text::{EncodedHeadline, Vocabulary, PAD_INDEX};

/// Display name of the padding feature; never a vocabulary token.
pub const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    SelfLearnt,
    Static,
    NonStatic,
}

impl EmbeddingMode {
    pub fn is_trainable(self) -> bool {
        self != EmbeddingMode::Static
    }

    pub fn uses_pretrained(self) -> bool {
        self != EmbeddingMode::SelfLearnt
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingMode::SelfLearnt => "self_learnt",
            EmbeddingMode::Static => "static",
            EmbeddingMode::NonStatic => "non_static",
        }
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self_learnt" | "self" => Ok(EmbeddingMode::SelfLearnt),
            "static" => Ok(EmbeddingMode::Static),
            "non_static" | "nonstatic" => Ok(EmbeddingMode::NonStatic),
            other => Err(Error::Config(format!("unknown embedding mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub matrix: Matrix,
    pub mode: EmbeddingMode,
    pub pretrained_hit_count: usize,
}

impl EmbeddingTable {
    pub fn p(&self) -> usize {
        self.matrix.cols()
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.matrix.row(index)
    }
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| Error::Config(format!("normal({mean}, {std}): {e}")))
}

/// Rows 1..=|V| drawn i.i.d. from Normal(mean, std²); row 0 zero.
pub fn init_self_learnt(vocab: &Vocabulary, p: usize, mean: f64, std: f64, seed: u64) -> Result<EmbeddingTable> {
    if p == 0 {
        return Err(Error::Config("embedding dimension p must be >= 1".into()));
    }
    if !(std > 0.0) {
        return Err(Error::Config(format!("embedding std must be > 0, got {std}")));
    }
    let dist = normal(mean, std)?;
    let mut rng = stream(seed, Stream::EmbeddingInit);
    let matrix = Matrix::from_fn(vocab.size() + 1, p, |r, _| {
        if r == PAD_INDEX {
            0.0
        } else {
            dist.sample(&mut rng)
        }
    });
    Ok(EmbeddingTable {
        matrix,
        mode: EmbeddingMode::SelfLearnt,
        pretrained_hit_count: 0,
    })
}

/// Vectors read from a word2vec text file, restricted to a vocabulary, with
/// element-wise statistics taken over every vector in the file.
#[derive(Debug, Clone)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
    pub n_read: usize,
    pub mean: f64,
    pub std: f64,
}

impl PretrainedVectors {
    /// Reads `path`, keeping only tokens present in `keep` (all if `None`).
    pub fn read(path: impl AsRef<Path>, expected_dim: usize, keep: Option<&Vocabulary>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();

        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (count, dim) = match fields.as_slice() {
            [c, d] => (
                c.parse::<usize>()
                    .map_err(|_| Error::parse(path, 1, format!("bad vector count {c:?}")))?,
                d.parse::<usize>()
                    .map_err(|_| Error::parse(path, 1, format!("bad dimension {d:?}")))?,
            ),
            _ => return Err(Error::parse(path, 1, "header must be `<count> <dim>`")),
        };
        if dim != expected_dim {
            return Err(Error::Config(format!(
                "{} has dimension {dim}, configured p = {expected_dim}",
                path.display()
            )));
        }

        let mut vectors = HashMap::new();
        let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
        let mut n_read = 0;
        for (i, line) in lines.enumerate() {
            let line_no = i as u64 + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::parse(path, line_no, "non-numeric vector component"))?;
            if values.len() != dim {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected {dim} components, found {}", values.len()),
                ));
            }
            for &x in &values {
                n += 1;
                let delta = x - mean;
                mean += delta / n as f64;
                m2 += delta * (x - mean);
            }
            n_read += 1;
            if keep.is_none_or(|v| v.index_of(token).is_some()) {
                vectors.entry(token.to_string()).or_insert(values);
            }
        }
        if n_read == 0 {
            return Err(Error::parse(path, 2, "no vectors in file"));
        }
        if n_read != count {
            log::warn!("{}: header announces {count} vectors, read {n_read}", path.display());
        }
        Ok(PretrainedVectors {
            dim,
            vectors,
            n_read,
            mean,
            std: (m2 / n as f64).sqrt(),
        })
    }
}

/// Builds a table from pretrained vectors; tokens missing from the file get
/// Normal(μ̂, σ̂²) rows using the file's statistics.
pub fn from_pretrained(
    vocab: &Vocabulary,
    pretrained: &PretrainedVectors,
    mode: EmbeddingMode,
    seed: u64,
) -> Result<EmbeddingTable> {
    if !mode.uses_pretrained() {
        return Err(Error::Config(
            "self_learnt mode does not load pretrained vectors".into(),
        ));
    }
    let dist = normal(pretrained.mean, pretrained.std)?;
    let mut rng = stream(seed, Stream::EmbeddingInit);
    let mut matrix = Matrix::zeros(vocab.size() + 1, pretrained.dim);
    let mut hits = 0;
    for (i, token) in vocab.tokens().iter().enumerate() {
        let row = matrix.row_mut(i + 1);
        match pretrained.vectors.get(token) {
            Some(v) => {
                row.copy_from_slice(v);
                hits += 1;
            }
            None => row.iter_mut().for_each(|x| *x = dist.sample(&mut rng)),
        }
    }
    Ok(EmbeddingTable {
        matrix,
        mode,
        pretrained_hit_count: hits,
    })
}

pub fn load_pretrained(
    vocab: &Vocabulary,
    path: impl AsRef<Path>,
    p: usize,
    mode: EmbeddingMode,
    seed: u64,
) -> Result<EmbeddingTable> {
    let pretrained = PretrainedVectors::read(path, p, Some(vocab))?;
    from_pretrained(vocab, &pretrained, mode, seed)
}

/// Concatenates the rows addressed by `enc` into a vector of length `m·p`.
pub fn lookup_concat(enc: &EncodedHeadline, table: &EmbeddingTable) -> Result<Vec<f64>> {
    let p = table.p();
    let mut x = Vec::with_capacity(enc.indices.len() * p);
    for &i in &enc.indices {
        if i >= table.n_rows() {
            return Err(Error::InvalidInput(format!(
                "token index {i} out of range for {} embedding rows",
                table.n_rows()
            )));
        }
        x.extend_from_slice(table.row(i));
    }
    Ok(x)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidInput("cosine similarity of a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// The `k` most cosine-similar vocabulary tokens to `token`, most similar
/// first, ties broken by ascending index. Zero rows are skipped.
pub fn nearest_neighbors(
    token: &str,
    k: usize,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let query = vocab
        .index_of(token)
        .filter(|_| token != PAD_TOKEN)
        .ok_or_else(|| Error::UnknownToken(token.to_string()))?;
    if table.n_rows() != vocab.size() + 1 {
        return Err(Error::Shape(format!(
            "{} embedding rows for a vocabulary of {}",
            table.n_rows(),
            vocab.size()
        )));
    }
    let q = table.row(query);
    let mut scored = Vec::with_capacity(vocab.size());
    for idx in 1..=vocab.size() {
        if idx == query || norm(table.row(idx)) == 0.0 {
            continue;
        }
        scored.push((idx, cosine_similarity(q, table.row(idx))?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(idx, s)| (vocab.token(idx).expect("index in range").to_string(), s))
        .collect())
}
