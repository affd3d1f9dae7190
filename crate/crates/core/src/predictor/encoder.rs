//! Query encoders that turn text into fixed-width embeddings.
//!
//! `HashedNgram` is a built-in deterministic featurizer: character 3-grams of
//! the text (with one boundary marker on each side) are hashed into `dim`
//! buckets and the count vector is L2-normalized. `File` serves precomputed
//! vectors from a JSON-lines file with one `{"query_id": ..., "vector": [...]}`
//! object per line.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub query_id: String,
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

const BOUNDARY: char = '\u{2}';
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic id for queries submitted without one.
pub fn stable_query_id(text: &str) -> String {
    format!("q-{:016x}", fnv1a(0, text.as_bytes()))
}

pub fn hashed_ngram(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if text.is_empty() || dim == 0 {
        return v;
    }
    let chars: Vec<char> = std::iter::once(BOUNDARY).chain(text.chars()).chain(std::iter::once(BOUNDARY)).collect();
    let mut buf = String::with_capacity(12);
    for w in chars.windows(3) {
        buf.clear();
        buf.extend(w);
        let bucket = (fnv1a(seed, buf.as_bytes()) % dim as u64) as usize;
        v[bucket] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Precomputed embeddings keyed by query id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut store = EmbeddingStore::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let rec: Embedding = serde_json::from_str(&line).map_err(|e| Error::Dataset {
                path: path.display().to_string(),
                line: lineno,
                message: e.to_string(),
            })?;
            store.insert(rec).map_err(|e| Error::Dataset {
                path: path.display().to_string(),
                line: lineno,
                message: e.to_string(),
            })?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, e: Embedding) -> Result<()> {
        if e.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite entry in embedding `{}`", e.query_id)));
        }
        if self.vectors.is_empty() {
            self.dim = e.dim();
        } else if e.dim() != self.dim {
            return Err(Error::DimensionMismatch { what: "embedding", expected: self.dim, found: e.dim() });
        }
        self.vectors.insert(e.query_id, e.vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, query_id: &str) -> Option<&[f64]> {
        self.vectors.get(query_id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    HashedNgram { dim: usize, seed: u64 },
    File(EmbeddingStore),
}

impl Encoder {
    pub fn dim(&self) -> usize {
        match self {
            Encoder::HashedNgram { dim, .. } => *dim,
            Encoder::File(store) => store.dim(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Encoder::HashedNgram { dim, seed } => format!("hashed_ngram(d={dim},seed={seed})"),
            Encoder::File(store) => format!("file(d={},n={})", store.dim(), store.len()),
        }
    }

    pub fn embed(&self, query_id: &str, text: &str) -> Result<Embedding> {
        let vector = match self {
            Encoder::HashedNgram { dim, seed } => hashed_ngram(text, *dim, *seed),
            Encoder::File(store) => {
                store.get(query_id).ok_or_else(|| Error::MissingEmbedding(query_id.to_string()))?.to_vec()
            }
        };
        Ok(Embedding { query_id: query_id.to_string(), vector })
    }

    /// Like [`Encoder::embed`], failing unless the width equals `expected`.
    pub fn embed_checked(&self, query_id: &str, text: &str, expected: usize) -> Result<Embedding> {
        let e = self.embed(query_id, text)?;
        if e.dim() != expected {
            return Err(Error::DimensionMismatch { what: "embedding", expected, found: e.dim() });
        }
        Ok(e)
    }
}
