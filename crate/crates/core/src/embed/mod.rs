//! Paragraph Vector embeddings trained from scratch with negative sampling.
//!
//! PV-DBOW (the default) trains each paragraph vector to predict the words
//! of its paragraph against `negative` noise words; no word input vectors
//! are learned, and the negative-sampling output matrix is the only word
//! parameterization. PV-DM additionally learns word input vectors and
//! predicts each word from the mean of the paragraph vector and its context
//! window.
//!
//! Training may run hogwild-style over several threads. Matrices are then
//! shared through relaxed atomics, so updates can interleave and only the
//! single-threaded path is bitwise reproducible.

mod kernel;
mod persist;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{logistic_coeff, objective_and_grad, sigmoid};
pub use persist::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{infer_many, infer_vector, paragraph_key, train, EpochStats, TrainOutcome};
pub use vocab::{build_vocab, keep_probability, NegativeTable, Vocab};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("vocabulary is empty after applying min_count")]
    EmptyVocab,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite loss {loss} in epoch {epoch} (lr {lr}); training diverged")]
    NonFiniteLoss { epoch: usize, loss: f64, lr: f64 },
    #[error("paragraph has no in-vocabulary tokens")]
    NoKnownTokens,
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated")]
    TruncatedFile,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dbow,
    Dm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub mode: Mode,
    pub vector_size: usize,
    /// Context half-width for PV-DM; DBOW targets range over the whole paragraph.
    pub window: usize,
    pub min_count: u64,
    pub subsample_t: f64,
    pub negative: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            mode: Mode::Dbow,
            vector_size: 200,
            window: 15,
            min_count: 5,
            subsample_t: 1e-5,
            negative: 5,
            epochs: 50,
            initial_lr: 0.025,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidParams(m.to_string()));
        if self.vector_size == 0 {
            return bad("vector_size must be positive");
        }
        if self.negative == 0 {
            return bad("negative must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.subsample_t > 0.0) {
            return bad("subsample_t must be positive");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive and finite");
        }
        Ok(())
    }

    /// Final learning rate of the linear decay schedule.
    pub fn min_lr(&self) -> f64 {
        self.initial_lr / 100.0
    }
}

/// Trained vocabulary and parameter matrices.
///
/// Matrices are stored one vector per row: `paragraphs` is P x D,
/// `word_output` and `word_input` are V x D (the `D x P` / `D x V` column
/// layout, transposed). `word_input` is empty in DBOW mode.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub vocab: Vocab,
    pub params: TrainParams,
    /// Stable id of every training paragraph, in row order.
    pub paragraph_keys: Vec<String>,
    pub paragraphs: Vec<f64>,
    pub word_output: Vec<f64>,
    pub word_input: Vec<f64>,
    pub(crate) negatives: NegativeTable,
}

impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.params == other.params
            && self.paragraph_keys == other.paragraph_keys
            && bitwise_eq(&self.paragraphs, &other.paragraphs)
            && bitwise_eq(&self.word_output, &other.word_output)
            && bitwise_eq(&self.word_input, &other.word_input)
    }
}

fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub const NEGATIVE_EXPONENT: f64 = 0.75;

impl EmbeddingModel {
    pub(crate) fn assemble(
        vocab: Vocab,
        params: TrainParams,
        paragraph_keys: Vec<String>,
        paragraphs: Vec<f64>,
        word_output: Vec<f64>,
        word_input: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        let d = params.vector_size;
        let v = vocab.len();
        if paragraphs.len() != paragraph_keys.len() * d
            || word_output.len() != v * d
            || !(word_input.is_empty() || word_input.len() == v * d)
            || (params.mode == Mode::Dm && word_input.is_empty())
        {
            return Err(EmbedError::Corrupt("matrix dimensions disagree with vocab and params".into()));
        }
        let negatives = NegativeTable::new(&vocab, NEGATIVE_EXPONENT);
        Ok(Self {
            vocab,
            params,
            paragraph_keys,
            paragraphs,
            word_output,
            word_input,
            negatives,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.vector_size
    }

    pub fn n_paragraphs(&self) -> usize {
        self.paragraph_keys.len()
    }

    pub fn paragraph_vector(&self, row: usize) -> &[f64] {
        let d = self.dim();
        &self.paragraphs[row * d..(row + 1) * d]
    }

    pub fn paragraph_row(&self, key: &str) -> Option<usize> {
        self.paragraph_keys.iter().position(|k| k == key)
    }

    pub fn all_finite(&self) -> bool {
        self.paragraphs
            .iter()
            .chain(&self.word_output)
            .chain(&self.word_input)
            .all(|x| x.is_finite())
    }
}
