use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::Result;

const BUNDLED_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Lowercase stopword set.
#[derive(Clone, Debug, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Tokenizes one document: lowercase, punctuation to whitespace, then drop
/// tokens with digits, tokens shorter than 3 characters, and stopwords.
pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !t.chars().any(char::is_numeric))
        .filter(|t| t.chars().count() >= 3)
        .filter(|t| !stopwords.contains(t))
        .map(str::to_owned)
        .collect()
}

pub fn preprocess<S: AsRef<str>>(documents: &[S], stopwords: &Stopwords) -> Vec<Vec<String>> {
    documents
        .iter()
        .map(|d| tokenize(d.as_ref(), stopwords))
        .collect()
}
