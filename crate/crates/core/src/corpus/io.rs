//! Raw corpus ingestion and the on-disk layout of a preprocessed corpus.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::bow::{vectorize, BowCorpus};
use crate::corpus::preprocess::{preprocess, Stopwords};
use crate::corpus::vocab::{build_vocab, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub text: String,
    pub label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDoc {
    text: String,
    #[serde(default)]
    label: Option<String>,
}

/// Reads either JSON-lines (`{"text": ..., "label": ...}`, detected by a
/// leading `{` on the first non-blank line) or plain text with one document
/// per line.
pub fn read_raw_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let text = fs::read_to_string(path)?;
    parse_raw_corpus(&text)
}

pub fn parse_raw_corpus(text: &str) -> Result<Vec<RawDocument>> {
    let is_jsonl = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    if !is_jsonl {
        return Ok(text
            .lines()
            .map(|l| RawDocument {
                text: l.to_owned(),
                label: None,
            })
            .collect());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let doc: JsonDoc = serde_json::from_str(l)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
            Ok(RawDocument {
                text: doc.text,
                label: doc.label,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VocabOptions {
    pub min_doc_freq: usize,
    pub max_doc_frac: f64,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self {
            min_doc_freq: 5,
            max_doc_frac: 0.8,
        }
    }
}

/// A vectorized corpus together with its vocabulary.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub bow: BowCorpus,
    pub dropped: usize,
}

/// Tokenize, build the vocabulary, vectorize, and carry labels over to the
/// kept documents.
pub fn prepare(
    docs: &[RawDocument],
    stopwords: &Stopwords,
    opts: VocabOptions,
) -> Result<PreparedCorpus> {
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let tokens = preprocess(&texts, stopwords);
    let vocab = build_vocab(&tokens, opts.min_doc_freq, opts.max_doc_frac)?;
    let out = vectorize(&tokens, &vocab)?;
    if out.dropped > 0 {
        log::info!("dropped {} documents with no in-vocabulary words", out.dropped);
    }
    let labels = out.kept.iter().map(|&d| docs[d].label.clone()).collect();
    Ok(PreparedCorpus {
        vocab,
        bow: out.corpus.with_labels(labels)?,
        dropped: out.dropped,
    })
}

/// File names inside a preprocessed-corpus directory.
pub struct CorpusFiles {
    pub vocab: PathBuf,
    pub bow: PathBuf,
    pub labels: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            vocab: dir.join("vocab.txt"),
            bow: dir.join("bow.txt"),
            labels: dir.join("labels.txt"),
        }
    }
}

impl PreparedCorpus {
    /// Writes `vocab.txt`, `bow.txt` and, when any document is labeled,
    /// `labels.txt` (one line per document, empty when unlabeled).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::create_dir_all(dir.as_ref())?;
        let files = CorpusFiles::in_dir(dir);
        self.vocab.write(&files.vocab)?;
        self.bow.write(&files.bow)?;
        if self.bow.labels().iter().any(Option::is_some) {
            let mut text = String::new();
            for l in self.bow.labels() {
                text.push_str(l.as_deref().unwrap_or(""));
                text.push('\n');
            }
            fs::write(&files.labels, text)?;
        } else if files.labels.exists() {
            fs::remove_file(&files.labels)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let files = CorpusFiles::in_dir(dir);
        let vocab = Vocabulary::read(&files.vocab)?;
        let mut bow = BowCorpus::read(&files.bow)?;
        if bow.vocab_size() != vocab.len() {
            return Err(Error::Config(format!(
                "BoW declares V={} but vocabulary has {} words",
                bow.vocab_size(),
                vocab.len()
            )));
        }
        if files.labels.exists() {
            let labels: Vec<Option<String>> = fs::read_to_string(&files.labels)?
                .lines()
                .map(|l| (!l.is_empty()).then(|| l.to_owned()))
                .collect();
            bow = bow.with_labels(labels)?;
        }
        Ok(Self {
            vocab,
            bow,
            dropped: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_jsonl_and_plain_text() {
        let docs = parse_raw_corpus("{\"text\": \"hello\", \"label\": \"x\"}\n\n{\"text\": \"bye\"}\n")
            .unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].label.as_deref(), Some("x"));
        assert_eq!(docs[1].label, None);
        let docs = parse_raw_corpus("one doc\nanother doc\n").unwrap();
        assert_eq!(docs.len(), 2);
        assert!(docs.iter().all(|d| d.label.is_none()));
    }

    #[test]
    fn bad_json_line_is_config_error() {
        assert!(matches!(
            parse_raw_corpus("{\"text\": 3}\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prepare_save_load_roundtrip() {
        let raw: Vec<RawDocument> = [
            ("apple banana cherry", Some("fruit")),
            ("apple banana", Some("fruit")),
            ("zebra lion", Some("animal")),
            ("zebra lion apple", Some("animal")),
            ("the of and", Some("junk")),
        ]
        .iter()
        .map(|(t, l)| RawDocument {
            text: t.to_string(),
            label: l.map(str::to_owned),
        })
        .collect();
        let opts = VocabOptions {
            min_doc_freq: 2,
            max_doc_frac: 1.0,
        };
        let prepared = prepare(&raw, &Stopwords::english(), opts).unwrap();
        assert_eq!(prepared.dropped, 1);
        assert_eq!(prepared.bow.num_docs(), 4);
        assert!(prepared.bow.has_labels());
        let dir = tempfile::tempdir().unwrap();
        prepared.save(dir.path()).unwrap();
        let back = PreparedCorpus::load(dir.path()).unwrap();
        assert_eq!(back.vocab, prepared.vocab);
        assert_eq!(back.bow, prepared.bow);
    }
}
