use crate::corpus::bow::BowCorpus;

/// Whole-document co-occurrence counts backed by an inverted index.
#[derive(Clone, Debug)]
pub struct CooccurrenceStats {
    num_docs: usize,
    /// sorted document ids per word
    postings: Vec<Vec<u32>>,
}

impl CooccurrenceStats {
    pub fn new(corpus: &BowCorpus) -> Self {
        let mut postings = vec![Vec::new(); corpus.vocab_size()];
        for (d, doc) in corpus.docs().iter().enumerate() {
            for &(w, _) in doc {
                postings[w as usize].push(d as u32);
            }
        }
        Self {
            num_docs: corpus.num_docs(),
            postings,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    /// Number of documents containing `w`.
    pub fn df(&self, w: usize) -> usize {
        self.postings[w].len()
    }

    /// Number of documents containing both `a` and `b`.
    pub fn pair_df(&self, a: usize, b: usize) -> usize {
        let (x, y) = (&self.postings[a], &self.postings[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

pub fn cooccurrence_stats(corpus: &BowCorpus) -> CooccurrenceStats {
    CooccurrenceStats::new(corpus)
}
