use std::collections::HashMap;

use rand::Rng;

use super::EmbedError;

/// Retained vocabulary with exact corpus frequencies.
///
/// Ids are dense in `[0, len)`, ordered by descending frequency with ties
/// broken lexicographically so that construction is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<(String, u64)>,
    index: HashMap<String, u32>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocab {
    pub(crate) fn from_counts(mut words: Vec<(String, u64)>, min_count: u64) -> Result<Self, EmbedError> {
        words.retain(|(_, c)| *c >= min_count);
        if words.is_empty() {
            return Err(EmbedError::EmptyVocab);
        }
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let total_tokens = words.iter().map(|(_, c)| c).sum();
        Ok(Self {
            words,
            index,
            total_tokens,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize].0
    }

    pub fn frequency(&self, id: u32) -> u64 {
        self.words[id as usize].1
    }

    /// Sum of frequencies of retained tokens.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(|(w, c)| (w.as_str(), *c))
    }

    /// Map tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }
}

/// Count tokens across a corpus and keep those seen at least `min_count` times.
pub fn build_vocab<'a, I, S>(corpus: I, min_count: u64) -> Result<Vocab, EmbedError>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for tokens in corpus {
        for t in tokens {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
    }
    Vocab::from_counts(counts.into_iter().collect(), min_count.max(1))
}

/// Probability of keeping a token whose corpus frequency fraction is `f`
/// under subsampling threshold `t`: `min(1, (sqrt(f/t) + 1) * t/f)`.
pub fn keep_probability(f: f64, t: f64) -> f64 {
    if f <= 0.0 || !t.is_finite() {
        return 1.0;
    }
    (((f / t).sqrt() + 1.0) * (t / f)).min(1.0)
}

/// Discretized `freq^exponent` table for drawing negative samples.
#[derive(Debug, Clone)]
pub struct NegativeTable {
    table: Vec<u32>,
    probs: Vec<f64>,
}

impl NegativeTable {
    pub fn new(vocab: &Vocab, exponent: f64) -> Self {
        let weights: Vec<f64> = (0..vocab.len() as u32)
            .map(|i| (vocab.frequency(i) as f64).powf(exponent))
            .collect();
        let norm: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / norm).collect();
        let size = (vocab.len() * 100).clamp(1_000_000, 100_000_000);
        let mut table = Vec::with_capacity(size);
        let mut word = 0usize;
        let mut cumulative = probs[0];
        for slot in 0..size {
            table.push(word as u32);
            if (slot + 1) as f64 / size as f64 > cumulative && word + 1 < probs.len() {
                word += 1;
                cumulative += probs[word];
            }
        }
        Self { table, probs }
    }

    /// Exact sampling probability of token `id`.
    pub fn probability(&self, id: u32) -> f64 {
        self.probs[id as usize]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.table[rng.gen_range(0..self.table.len())]
    }
}
