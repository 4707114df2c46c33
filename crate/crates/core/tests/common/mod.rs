#![allow(dead_code)]

use traco::corpus::{prepare, PreparedCorpus, Stopwords, VocabOptions};
use traco::toy;
use traco::trainer::TrainConfig;

/// The bundled toy corpus, preprocessed with default options.
pub fn toy_corpus() -> PreparedCorpus {
    let docs = toy::generate(toy::DEFAULT_SEED);
    prepare(&docs, &Stopwords::english(), VocabOptions::default()).unwrap()
}

/// First `n` toy documents.
pub fn small_toy_corpus(n: usize) -> PreparedCorpus {
    let docs = toy::generate(toy::DEFAULT_SEED);
    let opts = VocabOptions {
        min_doc_freq: 2,
        max_doc_frac: 0.9,
    };
    prepare(&docs[..n], &Stopwords::english(), opts).unwrap()
}

/// A small and fast two-level configuration.
pub fn small_config(seed: u64, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.hierarchy.topics_per_level = vec![2, 6];
    cfg.hierarchy.embedding_dim = 16;
    cfg.hierarchy.hidden_dim = 32;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.seed = seed;
    cfg
}
