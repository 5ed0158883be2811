//! Tokenization and embedding providers.
//!
//! Two provider families stand behind one contract: a seeded "toy" table
//! (random per-token vectors, optionally trainable) and a file-backed table
//! of exact stored vectors. Walk guidance and classification are configured
//! with separate providers.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{dot, norm, Matrix};

/// Hashing-tokenizer vocabulary size.
pub const VOCAB_SIZE: u32 = 1 << 16;
/// Separator token used by the cross-attention input; deliberately outside
/// the hash range so no word can collide with it.
pub const SEP_TOKEN: u32 = VOCAB_SIZE;
/// Default truncation length.
pub const DEFAULT_T_MAX: usize = 128;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("token id {0} outside provider vocabulary")]
    UnknownToken(u32),
    #[error("bad embedding file: {0}")]
    BadFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Mix two u64s into a stable stream seed.
pub fn mix_seed(seed: u64, salt: &str) -> u64 {
    let mut h = fnv1a64(&seed.to_le_bytes());
    h ^= fnv1a64(salt.as_bytes());
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Lowercased word/punctuation split hashed into a fixed vocabulary.
/// Truncation keeps the prefix.
pub fn tokenize(text: &str, t_max: usize) -> TokenSequence {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in lower.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else {
            if !word.is_empty() {
                tokens.push(hash_token(&word));
                word.clear();
            }
            if !ch.is_whitespace() {
                tokens.push(hash_token(&ch.to_string()));
            }
        }
        if tokens.len() >= t_max {
            break;
        }
    }
    if !word.is_empty() && tokens.len() < t_max {
        tokens.push(hash_token(&word));
    }
    tokens.truncate(t_max);
    TokenSequence { tokens }
}

fn hash_token(word: &str) -> u32 {
    (fnv1a64(word.as_bytes()) % VOCAB_SIZE as u64) as u32
}

pub trait EmbeddingProvider: Send + Sync {
    fn d_model(&self) -> usize;
    fn token_vector(&self, token: u32) -> Result<Vec<f64>, EmbedError>;
}

/// Seeded random embedding table. Base vectors are derived lazily from the
/// seed; trained adjustments live in `overrides` so checkpoints stay small.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyProvider {
    pub seed: u64,
    pub d_model: usize,
    pub trainable: bool,
    #[serde(default)]
    pub overrides: BTreeMap<u32, Vec<f64>>,
}

impl ToyProvider {
    pub fn new(seed: u64, d_model: usize) -> Self {
        ToyProvider {
            seed,
            d_model,
            trainable: false,
            overrides: BTreeMap::new(),
        }
    }

    pub fn trainable(seed: u64, d_model: usize) -> Self {
        ToyProvider {
            trainable: true,
            ..ToyProvider::new(seed, d_model)
        }
    }

    pub fn base_vector(&self, token: u32) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &format!("tok:{token}")));
        // per-coordinate variance 1/d so expected norm is ~1
        let a = (3.0 / self.d_model as f64).sqrt();
        (0..self.d_model).map(|_| rng.random_range(-a..a)).collect()
    }

    pub fn vector(&self, token: u32) -> Vec<f64> {
        self.overrides
            .get(&token)
            .cloned()
            .unwrap_or_else(|| self.base_vector(token))
    }

    /// Apply an additive update to one token vector (training path).
    pub fn apply_delta(&mut self, token: u32, delta: &[f64]) {
        let base = self.base_vector(token);
        let entry = self.overrides.entry(token).or_insert(base);
        for (v, d) in entry.iter_mut().zip(delta) {
            *v += d;
        }
    }
}

impl EmbeddingProvider for ToyProvider {
    fn d_model(&self) -> usize {
        self.d_model
    }

    fn token_vector(&self, token: u32) -> Result<Vec<f64>, EmbedError> {
        Ok(self.vector(token))
    }
}

/// Exact stored vectors loaded from the embedding file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileProvider {
    pub d_model: usize,
    pub table: BTreeMap<u32, Vec<f64>>,
}

impl FileProvider {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<FileProvider, EmbedError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| EmbedError::BadFile("empty file".into()))??;
        let mut dim = None;
        let mut count = None;
        for part in header.split_whitespace() {
            if let Some(v) = part.strip_prefix("dim=") {
                dim = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("count=") {
                count = v.parse::<usize>().ok();
            }
        }
        let d_model =
            dim.ok_or_else(|| EmbedError::BadFile(format!("bad header: {header}")))?;
        let count =
            count.ok_or_else(|| EmbedError::BadFile(format!("bad header: {header}")))?;
        let mut table = BTreeMap::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let token: u32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| EmbedError::BadFile(format!("bad row: {line}")))?;
            let vec: Vec<f64> = it
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| EmbedError::BadFile(format!("bad row: {line}")))?;
            if vec.len() != d_model {
                return Err(EmbedError::BadFile(format!(
                    "row for token {token} has {} floats, expected {d_model}",
                    vec.len()
                )));
            }
            table.insert(token, vec);
        }
        if table.len() != count {
            return Err(EmbedError::BadFile(format!(
                "header promised {count} rows, found {}",
                table.len()
            )));
        }
        Ok(FileProvider { d_model, table })
    }

    pub fn from_path(path: &std::path::Path) -> Result<FileProvider, EmbedError> {
        let f = std::fs::File::open(path)?;
        FileProvider::from_reader(std::io::BufReader::new(f))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), EmbedError> {
        writeln!(w, "dim={} count={}", self.d_model, self.table.len())?;
        for (token, vec) in &self.table {
            write!(w, "{token}")?;
            for v in vec {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl EmbeddingProvider for FileProvider {
    fn d_model(&self) -> usize {
        self.d_model
    }

    fn token_vector(&self, token: u32) -> Result<Vec<f64>, EmbedError> {
        self.table
            .get(&token)
            .cloned()
            .ok_or(EmbedError::UnknownToken(token))
    }
}

/// Concrete provider choice carried through configs and checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Encoder {
    Toy(ToyProvider),
    File(FileProvider),
}

impl Encoder {
    pub fn as_toy_mut(&mut self) -> Option<&mut ToyProvider> {
        match self {
            Encoder::Toy(t) => Some(t),
            Encoder::File(_) => None,
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Encoder::Toy(t) if t.trainable)
    }
}

impl EmbeddingProvider for Encoder {
    fn d_model(&self) -> usize {
        match self {
            Encoder::Toy(t) => t.d_model(),
            Encoder::File(f) => f.d_model(),
        }
    }

    fn token_vector(&self, token: u32) -> Result<Vec<f64>, EmbedError> {
        match self {
            Encoder::Toy(t) => t.token_vector(token),
            Encoder::File(f) => f.token_vector(token),
        }
    }
}

/// T x d_model matrix of per-token embeddings.
pub fn embed_tokens(
    provider: &dyn EmbeddingProvider,
    seq: &TokenSequence,
) -> Result<Matrix, EmbedError> {
    let d = provider.d_model();
    let mut out = Matrix::zeros(seq.len(), d);
    for (i, &tok) in seq.tokens.iter().enumerate() {
        let v = provider.token_vector(tok)?;
        out.row_mut(i).copy_from_slice(&v);
    }
    Ok(out)
}

/// Arithmetic mean over rows; the empty matrix pools to the zero vector
/// (deleted posts).
pub fn mean_pool(m: &Matrix) -> Vec<f64> {
    m.mean_rows()
}

/// dot(a,b)/(|a||b|); zero-norm inputs score 0 (degenerate post).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// tokenize -> embed -> mean_pool.
pub fn sentence_embedding(
    provider: &dyn EmbeddingProvider,
    text: &str,
    t_max: usize,
) -> Result<Vec<f64>, EmbedError> {
    let seq = tokenize(text, t_max);
    let m = embed_tokens(provider, &seq)?;
    Ok(mean_pool(&m))
}
