use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const BOW_MAGIC: &str = "%traco-bow 1";

/// Sparse count vectors over a fixed vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowCorpus {
    vocab_size: usize,
    /// per document, `(word id, count)` sorted by word id, counts > 0
    docs: Vec<Vec<(u32, u32)>>,
    labels: Vec<Option<String>>,
}

/// Outcome of [`vectorize`].
#[derive(Clone, Debug)]
pub struct Vectorized {
    pub corpus: BowCorpus,
    /// indices of the input documents that were kept, in order
    pub kept: Vec<usize>,
    pub dropped: usize,
}

impl BowCorpus {
    pub fn new(vocab_size: usize, docs: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Config("corpus has no documents".into()));
        }
        for (d, doc) in docs.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::Config(format!("document {d} has no words")));
            }
            for w in doc.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::invalid(format!(
                        "document {d}: word ids must be strictly increasing"
                    )));
                }
            }
            for &(w, c) in doc {
                if w as usize >= vocab_size || c == 0 {
                    return Err(Error::invalid(format!(
                        "document {d}: bad entry (word {w}, count {c}) for V={vocab_size}"
                    )));
                }
            }
        }
        let labels = vec![None; docs.len()];
        Ok(Self {
            vocab_size,
            docs,
            labels,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<String>>) -> Result<Self> {
        if labels.len() != self.docs.len() {
            return Err(Error::shape(format!(
                "{} labels for {} documents",
                labels.len(),
                self.docs.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc(&self, d: usize) -> &[(u32, u32)] {
        &self.docs[d]
    }

    pub fn docs(&self) -> &[Vec<(u32, u32)>] {
        &self.docs
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    pub fn token_count(&self, d: usize) -> u64 {
        self.docs[d].iter().map(|&(_, c)| c as u64).sum()
    }

    /// Dense B×V count matrix for the given documents.
    pub fn dense_rows(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.vocab_size);
        for (r, &d) in indices.iter().enumerate() {
            let row = m.row_mut(r);
            for &(w, c) in &self.docs[d] {
                row[w as usize] = c as f64;
            }
        }
        m
    }

    /// Sparse triplet text format:
    ///
    /// ```text
    /// %traco-bow 1
    /// <N> <V> <nnz>
    /// <doc id> <word id> <count>      (one line per nonzero, doc-major order)
    /// ```
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let nnz: usize = self.docs.iter().map(Vec::len).sum();
        let mut out = String::with_capacity(nnz * 12 + 32);
        writeln!(out, "{BOW_MAGIC}").unwrap();
        writeln!(out, "{} {} {}", self.docs.len(), self.vocab_size, nnz).unwrap();
        for (d, doc) in self.docs.iter().enumerate() {
            for &(w, c) in doc {
                writeln!(out, "{d} {w} {c}").unwrap();
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(BOW_MAGIC) {
            return Err(Error::Config("BoW file: missing header line".into()));
        }
        let header: Vec<usize> = parse_fields(lines.next().unwrap_or(""), 3, "BoW size line")?;
        let (n, v, nnz) = (header[0], header[1], header[2]);
        let mut docs = vec![Vec::new(); n];
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<usize> = parse_fields(line, 3, "BoW triplet")?;
            if f[0] >= n {
                return Err(Error::Config(format!("BoW doc id {} >= N={n}", f[0])));
            }
            docs[f[0]].push((f[1] as u32, f[2] as u32));
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::Config(format!(
                "BoW file declares {nnz} entries but has {seen}"
            )));
        }
        Self::new(v, docs)
    }
}

fn parse_fields(line: &str, n: usize, what: &str) -> Result<Vec<usize>> {
    let fields: Vec<usize> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("{what} {line:?}: {e}")))?;
    if fields.len() != n {
        return Err(Error::Config(format!(
            "{what} {line:?}: expected {n} fields"
        )));
    }
    Ok(fields)
}

/// Counts in-vocabulary tokens per document. Documents without any
/// in-vocabulary token are dropped.
pub fn vectorize<S: AsRef<str>>(docs: &[Vec<S>], vocab: &Vocabulary) -> Result<Vectorized> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary("cannot vectorize against an empty vocabulary".into()));
    }
    let mut kept = Vec::new();
    let mut rows = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let mut ids: Vec<u32> = doc
            .iter()
            .filter_map(|t| vocab.id(t.as_ref()).map(|i| i as u32))
            .collect();
        if ids.is_empty() {
            continue;
        }
        ids.sort_unstable();
        let mut row: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match row.last_mut() {
                Some((w, c)) if *w == id => *c += 1,
                _ => row.push((id, 1)),
            }
        }
        rows.push(row);
        kept.push(d);
    }
    let dropped = docs.len() - kept.len();
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "all {} documents are empty after vectorization",
            docs.len()
        )));
    }
    Ok(Vectorized {
        corpus: BowCorpus::new(vocab.len(), rows)?,
        kept,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn counts_repeated_tokens() {
        let v = vectorize(&[vec!["cats", "cats"]], &vocab(&["cats"])).unwrap();
        assert_eq!(v.corpus.doc(0), &[(0, 2)]);
        assert_eq!(v.dropped, 0);
    }

    #[test]
    fn out_of_vocabulary_document_dropped() {
        let docs = vec![vec!["dogs"], vec!["cats", "mice"]];
        let v = vectorize(&docs, &vocab(&["cats", "mice"])).unwrap();
        assert_eq!(v.dropped, 1);
        assert_eq!(v.kept, vec![1]);
        assert_eq!(v.corpus.num_docs(), 1);
    }

    #[test]
    fn two_documents_share_vocabulary() {
        let docs = vec![vec!["mice", "cats", "mice"], vec!["cats", "cats", "cats", "owls"]];
        let v = vectorize(&docs, &vocab(&["cats", "mice"])).unwrap();
        assert_eq!(v.corpus.num_docs(), 2);
        assert_eq!(v.corpus.doc(0), &[(0, 1), (1, 2)]);
        assert_eq!(v.corpus.doc(1), &[(0, 3)]);
        let dense = v.corpus.dense_rows(&[1, 0]);
        assert_eq!(dense.data(), &[3.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn all_dropped_is_config_error() {
        let docs = vec![vec!["dogs"]];
        assert!(matches!(vectorize(&docs, &vocab(&["cats"])), Err(Error::Config(_))));
    }

    #[test]
    fn triplet_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bow.txt");
        let corpus = BowCorpus::new(5, vec![vec![(0, 2), (3, 1)], vec![(4, 7)]]).unwrap();
        corpus.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "%traco-bow 1\n2 5 3\n0 0 2\n0 3 1\n1 4 7\n");
        assert_eq!(BowCorpus::read(&path).unwrap(), corpus);
    }

    #[test]
    fn malformed_bow_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bow.txt");
        fs::write(&path, "%traco-bow 1\n1 2 2\n0 0 1\n").unwrap();
        assert!(matches!(BowCorpus::read(&path), Err(Error::Config(_))));
        fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(BowCorpus::read(&path), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn counts_sum_to_in_vocabulary_tokens(
            docs in prop::collection::vec(prop::collection::vec(0usize..6, 1..30), 1..10)
        ) {
            let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
            let v = vocab(&words);
            let toks: Vec<Vec<&str>> =
                docs.iter().map(|d| d.iter().map(|&i| words[i]).collect()).collect();
            let out = vectorize(&toks, &v).unwrap();
            for (row, &d) in out.kept.iter().enumerate() {
                prop_assert_eq!(out.corpus.token_count(row), toks[d].len() as u64);
            }
        }
    }
}
