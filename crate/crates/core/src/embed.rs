//! Title word embeddings (skip-gram with negative sampling) and the
//! document vectors derived from them.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no token reaches the minimum frequency {0}")]
    EmptyVocabulary(u64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("embedding file {path}: {message}")]
    Format { path: String, message: String },
    #[error("embedding file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases, splits on every non-alphanumeric character and drops
/// tokens shorter than two characters.
pub fn tokenize_title(title: &str) -> Vec<String> {
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    min_frequency: u64,
}

impl Vocabulary {
    /// Counts tokens and keeps those seen at least `min_frequency` times.
    /// Indices are assigned by descending frequency, ties alphabetically.
    pub fn build<'a, I>(corpus: I, min_frequency: u64) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for sentence in corpus {
            for tok in sentence {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= min_frequency).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
        let counts = kept.iter().map(|&(_, c)| c).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            tokens,
            counts,
            index,
            min_frequency,
        }
    }

    /// Vocabulary restored from a vector file; frequencies are not stored
    /// there and read back as zero.
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            counts: vec![0; tokens.len()],
            tokens,
            index,
            min_frequency: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn min_frequency(&self) -> u64 {
        self.min_frequency
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Skip-gram hyperparameters. Defaults are the values used for the
/// title embedding of the production system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramParams {
    pub dimensions: usize,
    pub min_frequency: u64,
    pub window: usize,
    pub learning_rate: f32,
    pub min_learning_rate: f32,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsampling: f64,
    pub iterations: usize,
    pub epochs: usize,
    pub negative: usize,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            dimensions: 150,
            min_frequency: 2,
            window: 3,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            subsampling: 1e-5,
            iterations: 5,
            epochs: 5,
            negative: 5,
        }
    }
}

impl SkipGramParams {
    /// Number of passes over the corpus (iterations times epochs).
    pub fn passes(&self) -> usize {
        self.iterations * self.epochs
    }

    fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidParams(m.to_string()));
        if self.dimensions == 0 {
            return bad("dimensions must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.passes() == 0 {
            return bad("iterations and epochs must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.subsampling.is_finite() || self.subsampling < 0.0 {
            return bad("learning rate must be positive and subsampling non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbedding {
    vocab: Vocabulary,
    dimension: usize,
    /// Row-major, one row per vocabulary index.
    matrix: Vec<f32>,
}

impl WordEmbedding {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.matrix[index * self.dimension..(index + 1) * self.dimension]
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.vocab.get(token).map(|i| self.row(i))
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    /// Word2vec text format: a `V dim` header, then one `token f1 .. fdim`
    /// line per word.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let io = |e| EmbedError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{} {}", self.vocab.len(), self.dimension).map_err(io)?;
        for i in 0..self.vocab.len() {
            write!(w, "{}", self.vocab.token(i)).map_err(io)?;
            for x in self.row(i) {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let p = path.display().to_string();
        let io = |e| EmbedError::Io {
            path: p.clone(),
            source: e,
        };
        let fmt = |m: String| EmbedError::Format {
            path: p.clone(),
            message: m,
        };
        let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
        let header = lines.next().ok_or_else(|| fmt("missing header".into()))?.map_err(io)?;
        let mut parts = header.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(rows)), Some(Ok(dim)), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(fmt(format!("bad header {header:?}")));
        };
        let mut tokens = Vec::with_capacity(rows);
        let mut matrix = Vec::with_capacity(rows * dim);
        for (no, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default().to_string();
            let before = matrix.len();
            for f in fields {
                let x = f
                    .parse::<f32>()
                    .map_err(|e| fmt(format!("line {}: {e}", no + 2)))?;
                if !x.is_finite() {
                    return Err(fmt(format!("line {}: non-finite value", no + 2)));
                }
                matrix.push(x);
            }
            if matrix.len() - before != dim {
                return Err(fmt(format!("line {}: expected {dim} values", no + 2)));
            }
            tokens.push(token);
        }
        if tokens.len() != rows {
            return Err(fmt(format!("header says {rows} rows, found {}", tokens.len())));
        }
        Ok(WordEmbedding {
            vocab: Vocabulary::from_tokens(tokens),
            dimension: dim,
            matrix,
        })
    }

    /// Builds an embedding from explicit vectors; used for fixtures.
    pub fn from_vectors(rows: Vec<(String, Vec<f32>)>) -> Result<Self, EmbedError> {
        let dimension = rows.first().map(|r| r.1.len()).unwrap_or(0);
        let mut tokens = Vec::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dimension);
        for (t, v) in rows {
            if v.len() != dimension {
                return Err(EmbedError::DimensionMismatch(dimension, v.len()));
            }
            tokens.push(t);
            matrix.extend(v);
        }
        Ok(WordEmbedding {
            vocab: Vocabulary::from_tokens(tokens),
            dimension,
            matrix,
        })
    }
}

/// Trains skip-gram embeddings with negative sampling. Single-threaded, so
/// a fixed seed gives bit-identical output.
pub fn train_word_embeddings(
    corpus: &[Vec<String>],
    params: &SkipGramParams,
    seed: u64,
) -> Result<WordEmbedding, EmbedError> {
    params.validate()?;
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(EmbedError::EmptyCorpus);
    }
    let vocab = Vocabulary::build(corpus.iter().map(Vec::as_slice), params.min_frequency);
    if vocab.is_empty() {
        return Err(EmbedError::EmptyVocabulary(params.min_frequency));
    }
    let dim = params.dimensions;
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut input: Vec<f32> = (0..v * dim)
        .map(|_| (rng.random::<f32>() - 0.5) / dim as f32)
        .collect();
    let mut output = vec![0f32; v * dim];

    let noise = WeightedIndex::new((0..v).map(|i| (vocab.count(i) as f64).powf(0.75)))
        .expect("counts are positive");

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.get(t)).collect())
        .collect();
    let train_words = vocab.total();
    let threshold = params.subsampling * train_words as f64;
    let keep_prob: Vec<f64> = (0..v)
        .map(|i| {
            if params.subsampling <= 0.0 {
                1.0
            } else {
                let f = vocab.count(i) as f64;
                ((f / threshold).sqrt() + 1.0) * threshold / f
            }
        })
        .collect();

    let total = (params.passes() as u64 * train_words) as f64 + 1.0;
    let mut processed: u64 = 0;
    let mut hidden_grad = vec![0f32; dim];
    let mut kept: Vec<usize> = Vec::new();

    for _pass in 0..params.passes() {
        for sentence in &sentences {
            let alpha = (params.learning_rate * (1.0 - processed as f32 / total as f32))
                .max(params.min_learning_rate);
            processed += sentence.len() as u64;
            kept.clear();
            for &w in sentence {
                if keep_prob[w] >= 1.0 || rng.random::<f64>() < keep_prob[w] {
                    kept.push(w);
                }
            }
            for pos in 0..kept.len() {
                let center = kept[pos];
                let shrink = rng.random_range(0..params.window);
                let reach = params.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(kept.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let ctx = kept[ctx_pos];
                    hidden_grad.iter_mut().for_each(|g| *g = 0.0);
                    let ctx_row = ctx * dim..(ctx + 1) * dim;
                    for d in 0..=params.negative {
                        let (target, label) = if d == 0 {
                            (center, 1.0f32)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = target * dim..(target + 1) * dim;
                        let dot: f32 = input[ctx_row.clone()]
                            .iter()
                            .zip(&output[out_row.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * alpha;
                        for ((h, o), i) in hidden_grad
                            .iter_mut()
                            .zip(&mut output[out_row])
                            .zip(&input[ctx_row.clone()])
                        {
                            *h += g * *o;
                            *o += g * *i;
                        }
                    }
                    for (i, h) in input[ctx_row].iter_mut().zip(&hidden_grad) {
                        *i += *h;
                    }
                }
            }
        }
    }
    debug_assert!(input.iter().all(|x| x.is_finite()));
    Ok(WordEmbedding {
        vocab,
        dimension: dim,
        matrix: input,
    })
}

fn sigmoid(x: f32) -> f32 {
    if x > 6.0 {
        1.0
    } else if x < -6.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub vector: Vec<f64>,
    /// Number of in-vocabulary tokens averaged.
    pub support: usize,
}

/// Mean of the in-vocabulary token vectors; the zero vector when none are
/// known.
pub fn embed_document<S: AsRef<str>>(e: &WordEmbedding, tokens: &[S]) -> DocVector {
    let mut vector = vec![0f64; e.dimension()];
    let mut support = 0;
    for row in tokens.iter().filter_map(|t| e.vector(t.as_ref())) {
        support += 1;
        for (acc, x) in vector.iter_mut().zip(row) {
            *acc += f64::from(*x);
        }
    }
    if support > 0 {
        let n = support as f64;
        vector.iter_mut().for_each(|x| *x /= n);
    }
    DocVector { vector, support }
}

const NEAR_ZERO: f64 = 1e-12;

/// `1 - cos(u, v)` in `[0, 2]`. Two near-zero vectors are at distance 0,
/// a near-zero vector and any other at distance 1.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch(u.len(), v.len()));
    }
    Ok(cosine_distance_unchecked(u, v))
}

pub(crate) fn cosine_distance_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let (nu, nv) = (nu.sqrt(), nv.sqrt());
    match (nu < NEAR_ZERO, nv < NEAR_ZERO) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (nu * nv)).clamp(0.0, 2.0),
    }
}
