//! Dataset ingestion, `[prompt; response]` input construction and
//! deterministic featurization.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{fnv1a64, SplitMix64};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
    #[error("line {line}: expected {expected} labels, got {actual}")]
    LabelLength {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: label {index} is {value}, expected 0 or 1")]
    LabelValue {
        line: usize,
        index: usize,
        value: u64,
    },
    #[error("invalid vocabulary: {0}")]
    Vocab(String),
    #[error("line {line}: embedding has length {actual}, earlier rows have {expected}")]
    EmbeddingLength {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: embedding contains a non-finite value")]
    NonFinite { line: usize },
    #[error("invalid featurizer config: {0}")]
    Config(String),
    #[error("invalid split: {0}")]
    Split(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn json_error(line: usize, err: serde_json::Error) -> CorpusError {
    match err.classify() {
        serde_json::error::Category::Data => CorpusError::Field {
            line,
            message: err.to_string(),
        },
        _ => CorpusError::Json {
            line,
            message: err.to_string(),
        },
    }
}

/// Ordered rejection-category names; index order is the canonical category order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CategoryVocab {
    names: Vec<String>,
}

impl CategoryVocab {
    pub const DEFAULT_SIZE: usize = 14;

    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(CorpusError::Vocab(
                "at least one category is required".into(),
            ));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(CorpusError::Vocab(format!(
                    "category {i} has an empty name"
                )));
            }
            if names[..i].contains(name) {
                return Err(CorpusError::Vocab(format!("duplicate category {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// `category_01` .. `category_NN`.
    pub fn placeholder(count: usize) -> Self {
        let names = (1..=count.max(1))
            .map(|i| format!("category_{i:02}"))
            .collect();
        Self { names }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        let names: Vec<String> = serde_json::from_str(&text).map_err(|e| json_error(1, e))?;
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }
}

impl Default for CategoryVocab {
    fn default() -> Self {
        Self::placeholder(Self::DEFAULT_SIZE)
    }
}

impl TryFrom<Vec<String>> for CategoryVocab {
    type Error = CorpusError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<CategoryVocab> for Vec<String> {
    fn from(vocab: CategoryVocab) -> Self {
        vocab.names
    }
}

/// One `(prompt, response, labels)` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub prompt: String,
    pub response: String,
    pub labels: Vec<u8>,
}

impl LabeledExample {
    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    pub fn is_harmful(&self) -> bool {
        self.labels.contains(&1)
    }
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    prompt: String,
    response: String,
    labels: Vec<u64>,
}

fn parse_example(line_no: usize, line: &str, vocab: &CategoryVocab) -> Result<LabeledExample> {
    let raw: RawExample = serde_json::from_str(line).map_err(|e| json_error(line_no, e))?;
    if raw.labels.len() != vocab.len() {
        return Err(CorpusError::LabelLength {
            line: line_no,
            expected: vocab.len(),
            actual: raw.labels.len(),
        });
    }
    let mut labels = Vec::with_capacity(raw.labels.len());
    for (index, &value) in raw.labels.iter().enumerate() {
        if value > 1 {
            return Err(CorpusError::LabelValue {
                line: line_no,
                index,
                value,
            });
        }
        labels.push(value as u8);
    }
    Ok(LabeledExample {
        id: raw.id,
        prompt: raw.prompt,
        response: raw.response,
        labels,
    })
}

/// Parses dataset JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str, vocab: &CategoryVocab) -> Result<Vec<LabeledExample>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| parse_example(i + 1, line, vocab))
        .collect()
}

pub fn load_jsonl(path: &Path, vocab: &CategoryVocab) -> Result<Vec<LabeledExample>> {
    parse_jsonl(&read_file(path)?, vocab)
}

pub fn write_jsonl<W: Write>(examples: &[LabeledExample], mut out: W) -> std::io::Result<()> {
    for example in examples {
        serde_json::to_writer(&mut out, example)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub const INPUT_SEPARATOR: &str = "\n[SEP]\n";

/// The model input `x = [p; r]`.
pub fn build_input(prompt: &str, response: &str) -> String {
    let mut x = String::with_capacity(prompt.len() + response.len() + INPUT_SEPARATOR.len());
    x.push_str(prompt);
    x.push_str(INPUT_SEPARATOR);
    x.push_str(response);
    x
}

/// Shared feature vector `h` fed to both inference heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        values.iter().all(|v| v.is_finite()).then_some(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            ngram_min: 1,
            ngram_max: 2,
            hash_seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(CorpusError::Config(format!("dim {} is below 8", self.dim)));
        }
        if !(1 <= self.ngram_min && self.ngram_min <= self.ngram_max && self.ngram_max <= 4) {
            return Err(CorpusError::Config(format!(
                "n-gram range {}..={} must satisfy 1 <= min <= max <= 4",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

/// Signed feature hashing of lowercased whitespace-token n-grams, L2-normalized.
pub fn featurize(x: &str, cfg: &FeaturizerConfig) -> FeatureVector {
    let mut values = vec![0.0; cfg.dim];
    let lowered = x.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    for n in cfg.ngram_min..=cfg.ngram_max {
        if n > tokens.len() {
            break;
        }
        for gram in tokens.windows(n) {
            let hash = fnv1a64(gram.join(" ").as_bytes()) ^ cfg.hash_seed;
            let bucket = (hash % cfg.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    FeatureVector(values)
}

/// Precomputed embeddings keyed by example id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, FeatureVector>,
}

impl EmbeddingTable {
    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.vectors.get(id)
    }
}

#[derive(Deserialize)]
struct RawEmbedding {
    id: String,
    embedding: Vec<Option<f64>>,
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut dim = None;
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        // non-finite numbers are not valid JSON; `null` is how NaN usually leaks in
        let raw: RawEmbedding = serde_json::from_str(line).map_err(|e| json_error(line_no, e))?;
        let values: Vec<f64> = raw
            .embedding
            .iter()
            .map(|v| v.filter(|x| x.is_finite()))
            .collect::<Option<_>>()
            .ok_or(CorpusError::NonFinite { line: line_no })?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(CorpusError::EmbeddingLength {
                line: line_no,
                expected,
                actual: values.len(),
            });
        }
        if vectors.contains_key(&raw.id) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        vectors.insert(raw.id, FeatureVector(values));
    }
    Ok(EmbeddingTable {
        dim: dim.unwrap_or(0),
        vectors,
    })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    parse_embeddings(&read_file(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train_batches: Vec<Vec<T>>,
    pub eval: Vec<T>,
}

impl<T> Split<T> {
    pub fn train_len(&self) -> usize {
        self.train_batches.iter().map(Vec::len).sum()
    }
}

/// Seeded shuffle, then the first `round(n · train_fraction)` items (at
/// least one) become fixed-order training batches and the rest the eval set.
pub fn split_and_batch<T: Clone>(
    items: &[T],
    train_fraction: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Split<T>> {
    if items.is_empty() {
        return Err(CorpusError::Split("no examples".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::Split(format!(
            "train fraction {train_fraction} is outside (0, 1)"
        )));
    }
    if batch_size == 0 {
        return Err(CorpusError::Split("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let n_train = ((items.len() as f64 * train_fraction).round() as usize).clamp(1, items.len());
    let train_batches = order[..n_train]
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| items[i].clone()).collect())
        .collect();
    let eval = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        train_batches,
        eval,
    })
}
