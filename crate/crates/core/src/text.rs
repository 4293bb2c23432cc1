//! Tokenization, vocabulary construction and ordinal encoding with post-padding.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// English stop words, one per line, apostrophes removed.
pub const STOP_WORDS_TXT: &str = include_str!("stopwords.txt");

static STOP_WORDS: LazyLock<std::collections::HashSet<&'static str>> = LazyLock::new(|| {
    STOP_WORDS_TXT
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .collect()
});

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}$%&+<=>|~]").expect("valid punctuation regex"));

/// Index reserved for the padding dummy feature.
pub const PAD_INDEX: usize = 0;

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(token)
}

/// Lowercases, strips punctuation, splits on whitespace and drops stop words.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let stripped = PUNCT.replace_all(&lower, "");
    stripped
        .split_whitespace()
        .filter(|t| !is_stop_word(t))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_len: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    max_len: usize,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i + 1)).collect();
        Vocabulary {
            tokens: r.tokens,
            index,
            max_len: r.max_len,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            max_len: v.max_len,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Number of real tokens (excludes padding).
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(1)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }

    /// Tokens in index order; the token at position `i` has index `i + 1`.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Replaces the padded length `m`.
    pub fn with_max_len(mut self, max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config("max_len must be >= 1".into()));
        }
        self.max_len = max_len;
        Ok(self)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("max_len={}\n", self.max_len);
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            out.push_str(&(i + 1).to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines.next().unwrap_or_default();
        let max_len = header
            .strip_prefix("max_len=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&m| m >= 1)
            .ok_or_else(|| Error::InvalidInput(format!("bad vocabulary header {header:?}")))?;
        let mut tokens = Vec::new();
        for (n, line) in lines.enumerate() {
            let (tok, idx) = line
                .split_once('\t')
                .ok_or_else(|| Error::InvalidInput(format!("vocabulary line {}: missing tab", n + 2)))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("vocabulary line {}: bad index", n + 2)))?;
            if idx != tokens.len() + 1 {
                return Err(Error::InvalidInput(format!(
                    "vocabulary line {}: index {idx} is not contiguous",
                    n + 2
                )));
            }
            tokens.push(tok.to_string());
        }
        Ok(VocabRepr { max_len, tokens }.into())
    }

    /// Hex SHA-256 of the TSV serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}

/// Assigns indices 1.. in first-occurrence order; `m` is the longest list.
pub fn build_vocabulary<S: AsRef<str>>(training: &[Vec<S>]) -> Result<Vocabulary> {
    let mut tokens = Vec::new();
    let mut index = HashMap::new();
    let mut max_len = 0;
    for sentence in training {
        max_len = max_len.max(sentence.len());
        for tok in sentence {
            let tok = tok.as_ref();
            if !index.contains_key(tok) {
                tokens.push(tok.to_string());
                index.insert(tok.to_string(), tokens.len());
            }
        }
    }
    if tokens.is_empty() {
        return Err(Error::EmptyDataset("no tokens in training sentences"));
    }
    Ok(Vocabulary { tokens, index, max_len })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedHeadline {
    pub indices: Vec<usize>,
    pub true_len: usize,
}

/// Drops unknown tokens, truncates to `m`, then appends zeros up to `m`.
pub fn encode_and_pad<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> EncodedHeadline {
    let m = vocab.max_len;
    let mut indices: Vec<usize> = tokens
        .iter()
        .filter_map(|t| vocab.index_of(t.as_ref()))
        .take(m)
        .collect();
    let true_len = indices.len();
    indices.resize(m, PAD_INDEX);
    EncodedHeadline { indices, true_len }
}

pub fn decode<'v>(enc: &EncodedHeadline, vocab: &'v Vocabulary) -> Vec<&'v str> {
    enc.indices[..enc.true_len]
        .iter()
        .filter_map(|&i| vocab.token(i))
        .collect()
}
