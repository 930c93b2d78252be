//! Tokenization and n-grams, shared by the BM25 index and the generation metrics.

use std::ops::Deref;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Normalized terms of a text, in order. Never contains empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl FromIterator<String> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().filter(|t| !t.is_empty()).collect())
    }
}

/// Tokenizer options. The default (NFKC, lowercase, alphanumeric split) has no
/// stemming and no stopword removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(default)]
    pub stem: bool,
    #[serde(default)]
    pub stopwords: bool,
}

impl TokenizerConfig {
    pub(crate) fn flags(self) -> u8 {
        u8::from(self.stem) | (u8::from(self.stopwords) << 1)
    }

    pub(crate) fn from_flags(flags: u8) -> Option<Self> {
        (flags < 4).then_some(Self {
            stem: flags & 1 != 0,
            stopwords: flags & 2 != 0,
        })
    }
}

pub struct Tokenizer {
    config: TokenizerConfig,
    stemmer: Option<Stemmer>,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> Self {
        Self {
            config,
            stemmer: config.stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    pub fn config(&self) -> TokenizerConfig {
        self.config
    }

    pub fn tokenize(&self, text: &str) -> TokenSeq {
        let mut tokens = split_normalized(text);
        if self.config.stopwords {
            tokens.retain(|t| !is_stopword(t));
        }
        if let Some(stemmer) = &self.stemmer {
            for t in &mut tokens {
                let stemmed = stemmer.stem(t);
                if stemmed != t.as_str() {
                    *t = stemmed.into_owned();
                }
            }
            tokens.retain(|t| !t.is_empty());
        }
        TokenSeq(tokens)
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(TokenizerConfig::default())
    }
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer")
            .field("config", &self.config)
            .finish()
    }
}

/// Default pipeline: NFKC, lowercase, split on non-alphanumerics.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(split_normalized(text))
}

fn split_normalized(text: &str) -> Vec<String> {
    // Lowercasing can leave non-NFKC sequences behind, so normalize twice.
    let lowered: String = text.nfkc().collect::<String>().to_lowercase();
    let normalized: String = lowered.nfkc().collect();
    normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// All contiguous windows of length `n`.
pub fn ngrams<T>(tokens: &[T], n: usize) -> Result<Vec<&[T]>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n-gram order must be >= 1".into()));
    }
    Ok(tokens.windows(n).collect())
}

// Common English function words.
const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}
