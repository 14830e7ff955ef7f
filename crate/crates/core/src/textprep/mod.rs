//! Text preprocessing: extracted filing text to cleaned token paragraphs.
//!
//! The pipeline is sentence splitting on the raw text, normalization
//! (lowercase, punctuation and digits to spaces), stop/common word removal,
//! and greedy merging of consecutive sentences into paragraphs of roughly
//! `target_len` tokens.

mod wordlists;

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wordlists::{COMMON_WORDS, STOPWORDS};

pub const DEFAULT_TARGET_LEN: usize = 40;
pub const DEFAULT_COMMON_CUTOFF: usize = 100;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("document `{0}` has no tokens left after filtering")]
    EmptyDocument(String),
    #[error("target paragraph length must be positive")]
    ZeroTarget,
    #[error("common word cutoff must be positive")]
    ZeroCutoff,
    #[error("failed to read word list {path}: {source}")]
    WordList { path: String, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Item1a,
    Other,
}

impl Section {
    pub fn as_str(self) -> &'static str {
        match self {
            Section::Item1a => "item1a",
            Section::Other => "other",
        }
    }
}

/// A block of preprocessed tokens from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub ordinal: usize,
    pub tokens: Vec<String>,
    pub source_section: Option<Section>,
}

/// Stopwords plus the top-ranked common English words to drop.
#[derive(Debug, Clone)]
pub struct StopConfig {
    stopwords: HashSet<String>,
    common_words: HashSet<String>,
    common_rank_cutoff: usize,
}

fn word_set<'a>(words: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    words
        .into_iter()
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn dedup_ranked<'a>(words: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    words
        .into_iter()
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty() && seen.insert(w.clone()))
        .collect()
}

fn read_word_file(path: &Path) -> Result<String, TextError> {
    fs::read_to_string(path).map_err(|source| TextError::WordList {
        path: path.display().to_string(),
        source,
    })
}

fn word_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl StopConfig {
    /// `ranked_common` is ordered most frequent first; only the first
    /// `cutoff` distinct entries are removed.
    pub fn new<'a>(
        stopwords: impl IntoIterator<Item = &'a str>,
        ranked_common: impl IntoIterator<Item = &'a str>,
        cutoff: usize,
    ) -> Result<Self, TextError> {
        if cutoff == 0 {
            return Err(TextError::ZeroCutoff);
        }
        let common_words = dedup_ranked(ranked_common).into_iter().take(cutoff).collect();
        Ok(Self {
            stopwords: word_set(stopwords),
            common_words,
            common_rank_cutoff: cutoff,
        })
    }

    pub fn with_cutoff(cutoff: usize) -> Result<Self, TextError> {
        Self::new(STOPWORDS.iter().copied(), COMMON_WORDS.iter().copied(), cutoff)
    }

    /// Load from word-per-line files (`#` starts a comment line). Missing
    /// paths fall back to the built-in lists.
    pub fn from_files(
        stopword_file: Option<&Path>,
        common_file: Option<&Path>,
        cutoff: usize,
    ) -> Result<Self, TextError> {
        let stop_text = stopword_file.map(read_word_file).transpose()?;
        let common_text = common_file.map(read_word_file).transpose()?;
        let stops: Vec<&str> = match &stop_text {
            Some(t) => word_lines(t).collect(),
            None => STOPWORDS.to_vec(),
        };
        let common: Vec<&str> = match &common_text {
            Some(t) => word_lines(t).collect(),
            None => COMMON_WORDS.to_vec(),
        };
        Self::new(stops, common, cutoff)
    }

    pub fn common_rank_cutoff(&self) -> usize {
        self.common_rank_cutoff
    }

    pub fn is_filtered(&self, token: &str) -> bool {
        token.chars().count() < 2 || self.stopwords.contains(token) || self.common_words.contains(token)
    }
}

impl Default for StopConfig {
    fn default() -> Self {
        Self::with_cutoff(DEFAULT_COMMON_CUTOFF).expect("default cutoff is positive")
    }
}

/// Lowercase, replace every non-letter (punctuation, digits, symbols) with a
/// space and collapse whitespace.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_alphabetic() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn tokenize(normalized: &str) -> Vec<String> {
    normalized.split_whitespace().map(str::to_string).collect()
}

/// Rule-based sentence splitter: a run of `.`, `!` or `?` (optionally
/// followed by closing quotes or brackets) ends a sentence when it is
/// followed by whitespace and an uppercase letter, or by the end of text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let push = |out: &mut Vec<String>, s: &[char]| {
        let sentence: String = s.iter().collect();
        let sentence = sentence.trim();
        if !sentence.is_empty() {
            out.push(sentence.to_string());
        }
    };
    while i < chars.len() {
        if !matches!(chars[i], '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
            j += 1;
        }
        while j < chars.len() && matches!(chars[j], '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].is_whitespace() {
            k += 1;
        }
        let boundary = k == chars.len() || (k > j && chars[k].is_uppercase());
        if boundary {
            push(&mut out, &chars[start..j]);
            start = k;
            i = k;
        } else {
            i = j;
        }
    }
    if start < chars.len() {
        push(&mut out, &chars[start..]);
    }
    out
}

/// Drop stopwords, common words and single-character tokens, keeping order.
pub fn filter_tokens(tokens: &[String], cfg: &StopConfig) -> Vec<String> {
    tokens.iter().filter(|t| !cfg.is_filtered(t)).cloned().collect()
}

/// Greedy paragraph merge.
///
/// Sentences are appended to the open paragraph until it first holds at
/// least `target_len` tokens. A trailing paragraph shorter than
/// `target_len / 4` is folded into the previous one, unless that would push
/// the previous paragraph past `target_len + longest sentence`.
pub fn merge_paragraphs(sentences: &[Vec<String>], target_len: usize) -> Result<Vec<Vec<String>>, TextError> {
    if target_len == 0 {
        return Err(TextError::ZeroTarget);
    }
    let max_sentence = sentences.iter().map(Vec::len).max().unwrap_or(0);
    let mut paragraphs: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for s in sentences.iter().filter(|s| !s.is_empty()) {
        current.extend(s.iter().cloned());
        if current.len() >= target_len {
            paragraphs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        let fold = current.len() < target_len / 4
            && paragraphs
                .last()
                .is_some_and(|p| p.len() + current.len() <= target_len + max_sentence);
        match paragraphs.last_mut() {
            Some(prev) if fold => prev.extend(current),
            _ => paragraphs.push(current),
        }
    }
    if paragraphs.is_empty() {
        return Err(TextError::EmptyDocument(String::new()));
    }
    Ok(paragraphs)
}

fn section_patterns() -> &'static (Regex, Regex) {
    static P: OnceLock<(Regex, Regex)> = OnceLock::new();
    P.get_or_init(|| {
        (
            Regex::new(r"(?i)^\s*item\s*1\.?\s*a\b").unwrap(),
            Regex::new(r"(?i)^\s*item\s*(1\.?\s*b\b|2\b)").unwrap(),
        )
    })
}

/// Split raw text into runs of lines tagged by section: lines from an
/// `Item 1A` heading up to the next `Item 1B` / `Item 2` heading are
/// `Item1a`, everything else `Other`.
pub fn section_runs(text: &str) -> Vec<(Section, String)> {
    let (start, stop) = section_patterns();
    let mut runs: Vec<(Section, String)> = Vec::new();
    let mut current = Section::Other;
    for line in text.lines() {
        if start.is_match(line) {
            current = Section::Item1a;
        } else if stop.is_match(line) {
            current = Section::Other;
        }
        match runs.last_mut() {
            Some((s, buf)) if *s == current => {
                buf.push('\n');
                buf.push_str(line);
            }
            _ => runs.push((current, line.to_string())),
        }
    }
    runs
}

/// Tokenized, filtered sentences of a text fragment.
pub fn sentence_tokens(text: &str, cfg: &StopConfig) -> Vec<Vec<String>> {
    split_sentences(text)
        .iter()
        .map(|s| filter_tokens(&tokenize(&normalize(s)), cfg))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Full document pipeline. Paragraphs never straddle an Item 1A boundary;
/// ordinals run across the whole document.
pub fn preprocess_document(
    doc_id: &str,
    text: &str,
    cfg: &StopConfig,
    target_len: usize,
) -> Result<Vec<Paragraph>, TextError> {
    if target_len == 0 {
        return Err(TextError::ZeroTarget);
    }
    let mut out = Vec::new();
    for (section, run) in section_runs(text) {
        let sentences = sentence_tokens(&run, cfg);
        if sentences.is_empty() {
            continue;
        }
        for tokens in merge_paragraphs(&sentences, target_len)? {
            out.push(Paragraph {
                doc_id: doc_id.to_string(),
                ordinal: out.len(),
                tokens,
                source_section: Some(section),
            });
        }
    }
    if out.is_empty() {
        return Err(TextError::EmptyDocument(doc_id.to_string()));
    }
    Ok(out)
}

/// A reference description becomes one paragraph, without sentence merging.
pub fn preprocess_reference(doc_id: &str, description: &str, cfg: &StopConfig) -> Result<Paragraph, TextError> {
    let tokens = filter_tokens(&tokenize(&normalize(description)), cfg);
    if tokens.is_empty() {
        return Err(TextError::EmptyDocument(doc_id.to_string()));
    }
    Ok(Paragraph {
        doc_id: doc_id.to_string(),
        ordinal: 0,
        tokens,
        source_section: None,
    })
}
