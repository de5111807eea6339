//! Static word vectors (GloVe text format) and sentence embedding providers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Sentence;
use crate::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 100;

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
    skipped: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Vectors of the wrong
    /// length are skipped; the UNK vector is the mean of the kept ones.
    pub fn from_pairs(dimension: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut skipped = 0;
        for (token, v) in pairs {
            if v.len() != dimension || v.iter().any(|x| !x.is_finite()) {
                skipped += 1;
                continue;
            }
            vectors.insert(token, v);
        }
        if vectors.is_empty() {
            return Err(Error::Data(format!("no valid {dimension}-dimensional vectors")));
        }
        let mut unk = vec![0.0; dimension];
        for v in vectors.values() {
            for (u, x) in unk.iter_mut().zip(v) {
                *u += x;
            }
        }
        let n = vectors.len() as f64;
        unk.iter_mut().for_each(|u| *u /= n);
        Ok(EmbeddingTable {
            dimension,
            vectors,
            unk,
            skipped,
        })
    }

    /// Deterministic pseudo-random unit-variance vectors for the given tokens,
    /// for runs without a word-vector file.
    pub fn hashed<'a>(tokens: impl IntoIterator<Item = &'a str>, dimension: usize, seed: u64) -> Result<Self> {
        let pairs = tokens.into_iter().map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(t));
            let v = (0..dimension).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (t.to_string(), v)
        });
        Self::from_pairs(dimension, pairs)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Lines rejected while loading.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.vectors.get(token).unwrap_or(&self.unk)
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn parse_vector_line(line: &str) -> Option<(String, Vec<f64>)> {
    let mut fields = line.split_whitespace();
    let token = fields.next()?.to_string();
    let v: Option<Vec<f64>> = fields.map(|f| f.parse().ok()).collect();
    Some((token, v?))
}

fn read_vector_file(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut malformed = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_vector_line(&line) {
            Some(p) => pairs.push(p),
            None => malformed += 1,
        }
    }
    if malformed > 0 {
        log::warn!("{}: {malformed} malformed lines skipped", path.display());
    }
    Ok(pairs)
}

/// Loads a whitespace-separated `token v1 ... vd` file.
pub fn load_static_embeddings(path: impl AsRef<Path>, dimension: usize) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let pairs = read_vector_file(path)?;
    let table = EmbeddingTable::from_pairs(dimension, pairs).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        e => e,
    })?;
    if table.skipped > 0 {
        log::warn!(
            "{}: {} lines with dimension other than {dimension} skipped",
            path.display(),
            table.skipped
        );
    }
    Ok(table)
}

/// Addresses one sentence of one cluster for precomputed lookups.
#[derive(Debug, Clone, Copy)]
pub struct SentenceKey<'a> {
    pub cluster: &'a str,
    pub doc: usize,
    pub sentence: usize,
}

impl std::fmt::Display for SentenceKey<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.cluster, self.doc, self.sentence)
    }
}

/// Source of fixed per-sentence vectors for sentence-sentence edge weights.
#[derive(Debug, Clone, Default)]
pub enum SentenceEmbedder {
    /// Mean of the sentence's static word vectors.
    #[default]
    MeanOfWords,
    /// Vectors keyed by `clusterId:docIdx:sentIdx`, in word-vector file format.
    Precomputed(HashMap<String, Vec<f64>>),
}

impl SentenceEmbedder {
    pub fn load_precomputed(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pairs = read_vector_file(path)?;
        if pairs.is_empty() {
            return Err(Error::Data(format!("{}: no sentence vectors", path.display())));
        }
        Ok(SentenceEmbedder::Precomputed(pairs.into_iter().collect()))
    }

    pub fn embed(&self, key: SentenceKey<'_>, sentence: &Sentence, table: &EmbeddingTable) -> Result<Vec<f64>> {
        match self {
            SentenceEmbedder::MeanOfWords => Ok(sentence_embedding(sentence, table)),
            SentenceEmbedder::Precomputed(map) => map
                .get(&key.to_string())
                .cloned()
                .ok_or_else(|| Error::Data(format!("no precomputed sentence embedding for {key}"))),
        }
    }
}

/// Mean of the sentence's word vectors (UNK for unknown tokens).
pub fn sentence_embedding(sentence: &Sentence, table: &EmbeddingTable) -> Vec<f64> {
    let mut mean = vec![0.0; table.dimension()];
    if sentence.tokens.is_empty() {
        return mean;
    }
    for t in &sentence.tokens {
        for (m, x) in mean.iter_mut().zip(table.lookup(t)) {
            *m += x;
        }
    }
    let n = sentence.tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Cosine similarity; 0 when either vector has norm below 1e-12.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Data(format!("cosine of vectors with lengths {} and {}", u.len(), v.len())));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu < NORM_FLOOR || nv < NORM_FLOOR {
        return Ok(0.0);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
