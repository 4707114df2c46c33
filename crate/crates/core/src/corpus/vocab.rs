use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense bijection between words and ids `0..V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// SHA-256 over the newline-joined word list, hex encoded. Two
    /// vocabularies hash equal iff they assign the same ids to the same words.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// One word per line; line number is the id.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for w in &self.words {
            text.push_str(w);
            text.push('\n');
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_words(text.lines().map(str::to_owned).collect())
    }
}

/// Keeps words whose document frequency lies in
/// `[min_doc_freq, max_doc_frac · N]`. Ids follow descending total count, then
/// lexicographic order.
pub fn build_vocab<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_doc_freq: usize,
    max_doc_frac: f64,
) -> Result<Vocabulary> {
    if min_doc_freq < 1 {
        return Err(Error::invalid("min_doc_freq must be at least 1"));
    }
    if !(max_doc_frac > 0.0 && max_doc_frac <= 1.0) {
        return Err(Error::invalid(format!(
            "max_doc_frac {max_doc_frac} outside (0, 1]"
        )));
    }
    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for tok in doc {
            let tok = tok.as_ref();
            *total.entry(tok).or_default() += 1;
            if seen.insert(tok) {
                *doc_freq.entry(tok).or_default() += 1;
            }
        }
    }
    let max_df = max_doc_frac * docs.len() as f64;
    let mut kept: Vec<(&str, usize)> = doc_freq
        .iter()
        .filter(|&(_, &df)| df >= min_doc_freq && df as f64 <= max_df)
        .map(|(&w, _)| (w, total[w]))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary(format!(
            "no words left (min_doc_freq={min_doc_freq}, max_doc_frac={max_doc_frac}, {} documents)",
            docs.len()
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_words(kept.into_iter().map(|(w, _)| w.to_owned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<Vec<&'static str>> {
        vec![vec!["a", "b"], vec!["a", "c"], vec!["a", "d"]]
    }

    #[test]
    fn min_doc_freq_filters() {
        let v = build_vocab(&toy(), 2, 1.0).unwrap();
        assert_eq!(v.words(), &["a"]);
    }

    #[test]
    fn no_filtering_keeps_everything() {
        let v = build_vocab(&toy(), 1, 1.0).unwrap();
        assert_eq!(v.words(), &["a", "b", "c", "d"]);
    }

    #[test]
    fn max_doc_frac_filters() {
        let v = build_vocab(&toy(), 1, 0.5).unwrap();
        assert_eq!(v.words(), &["b", "c", "d"]);
    }

    #[test]
    fn ids_follow_frequency_then_lexicographic() {
        let docs = vec![vec!["zeta", "zeta", "beta"], vec!["alpha", "beta"]];
        let v = build_vocab(&docs, 1, 1.0).unwrap();
        assert_eq!(v.words(), &["beta", "zeta", "alpha"]);
        assert_eq!(v.id("zeta"), Some(1));
    }

    #[test]
    fn empty_vocabulary_is_config_error() {
        assert!(matches!(build_vocab(&toy(), 4, 1.0), Err(Error::EmptyVocabulary(_))));
        let empty: Vec<Vec<&str>> = vec![vec![], vec![]];
        assert!(matches!(build_vocab(&empty, 1, 1.0), Err(Error::EmptyVocabulary(_))));
    }

    #[test]
    fn invalid_arguments() {
        assert!(matches!(build_vocab(&toy(), 0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_vocab(&toy(), 1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_vocab(&toy(), 1, 1.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn file_roundtrip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocab(&toy(), 1, 1.0).unwrap();
        v.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\nb\nc\nd\n");
        let back = Vocabulary::read(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.content_hash(), v.content_hash());
        let other = build_vocab(&toy(), 1, 0.5).unwrap();
        assert_ne!(other.content_hash(), v.content_hash());
    }
}
