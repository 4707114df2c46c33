//! Text preprocessing, vocabulary construction, and bag-of-words corpora.

pub mod bow;
pub mod cooccurrence;
pub mod io;
pub mod preprocess;
pub mod vocab;

pub use bow::{vectorize, BowCorpus, Vectorized};
pub use cooccurrence::{cooccurrence_stats, CooccurrenceStats};
pub use io::{prepare, read_raw_corpus, PreparedCorpus, RawDocument, VocabOptions};
pub use preprocess::{preprocess, tokenize, Stopwords};
pub use vocab::{build_vocab, Vocabulary};
